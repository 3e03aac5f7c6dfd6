#pragma once

// End-to-end pipelines for both variants, the quality sweep, the first-order
// radio energy model, and report emission (CSV + JSON).
//
// Metric conventions recorded in every report: SSIM on luma, 11x11 Gaussian
// window sigma 1.5; PSNR over all RGB channels jointly; +inf PSNR serialized
// as the literal "inf". The paired table's size ratio is oriented
// with-downscaling / without-downscaling (variant 2 bytes / variant 1 bytes).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "miot/codec.hpp"
#include "miot/metrics.hpp"
#include "miot/ppm.hpp"
#include "miot/rdn.hpp"
#include "miot/resample.hpp"

namespace miot {

struct RadioModel {
    double e_elec = 50e-9;   // electronics energy, J/bit
    double e_amp = 100e-12;  // amplifier energy, J/bit/m^gamma
    double distance = 50.0;  // m
    double gamma = 2.0;      // path-loss exponent
};

inline double energy_joules(std::size_t payload_bytes, const RadioModel& rm) {
    require(rm.e_elec >= 0 && rm.e_amp >= 0 && rm.distance >= 0 && rm.gamma >= 0,
            "radio model parameters must be non-negative");
    return 8.0 * static_cast<double>(payload_bytes) *
           (rm.e_elec + rm.e_amp * std::pow(rm.distance, rm.gamma));
}

struct PipelineResult {
    std::string image_id;
    int variant = 1;
    int quality = 0;
    std::size_t bytes = 0;
    double ssim_degraded = 0, psnr_degraded = 0;
    double ssim_restored = 0, psnr_restored = 0;
    double energy_j = 0;
};

// Variant 1: compress at full resolution, restore at the same resolution.
inline PipelineResult run_variant1(const std::string& id, const ImageU8& img, int quality,
                                   const RdnParams& params, const RadioModel& rm = {}) {
    require_scale(params, 1);
    PipelineResult r;
    r.image_id = id;
    r.variant = 1;
    r.quality = quality;
    std::vector<std::uint8_t> bits = codec::encode(img, quality);
    r.bytes = bits.size();
    r.energy_j = energy_joules(r.bytes, rm);
    ImageU8 degraded = codec::decode(bits);
    ImageU8 restored = restore_image(params, degraded);
    QualityScores d = score(img, degraded), s = score(img, restored);
    r.ssim_degraded = d.ssim;
    r.psnr_degraded = d.psnr;
    r.ssim_restored = s.ssim;
    r.psnr_restored = s.psnr;
    return r;
}

// Variant 2: x4 down-scale before compression; the decompressed baseline is
// brought back to reference size with bicubic up-scaling, the restored image
// comes from the super-resolving model. Non-multiple-of-4 images are padded
// by edge replication and all metrics are taken on the original region.
inline PipelineResult run_variant2(const std::string& id, const ImageU8& img, int quality,
                                   const RdnParams& params, const RadioModel& rm = {}) {
    require_scale(params, 4);
    PipelineResult r;
    r.image_id = id;
    r.variant = 2;
    r.quality = quality;

    int pw = (img.width + 3) & ~3, ph = (img.height + 3) & ~3;
    ImageU8 padded = pad_edge(img, pw, ph);
    ImageU8 down = downscale(padded, 4);

    codec::EncodeOptions opt;
    opt.scale_factor = 4;
    std::vector<std::uint8_t> bits = codec::encode(down, quality, opt);
    r.bytes = bits.size();
    r.energy_j = energy_joules(r.bytes, rm);

    ImageU8 degraded = codec::decode(bits);
    ImageU8 baseline = crop(upscale_bicubic(degraded, 4), 0, 0, img.width, img.height);
    ImageU8 restored = crop(restore_image(params, degraded), 0, 0, img.width, img.height);
    QualityScores d = score(img, baseline), s = score(img, restored);
    r.ssim_degraded = d.ssim;
    r.psnr_degraded = d.psnr;
    r.ssim_restored = s.ssim;
    r.psnr_restored = s.psnr;
    return r;
}

struct SweepPlan {
    // Table-1 style (variant-1 quality, variant-2 quality) pairings
    std::vector<std::pair<int, int>> quality_pairs = {{1, 10},  {5, 20},  {10, 30}, {15, 40},
                                                      {20, 50}, {25, 60}, {30, 70}};
    RadioModel radio;
    std::uint64_t seed = 0;
    int workers = 0;  // 0: pick from hardware
};

struct PairedRow {
    int quality_v1 = 0, quality_v2 = 0;
    double mean_bytes_v1 = 0, mean_bytes_v2 = 0;
    double ssim_diff = 0;    // mean restored SSIM, variant1 - variant2
    double psnr_diff = 0;    // same for PSNR
    double size_ratio = 0;   // mean bytes v2 / mean bytes v1 (with/without)
};

struct SweepReport {
    std::vector<PipelineResult> rows;
    std::vector<PairedRow> paired;
    RdnConfig model_v1, model_v2;
    RadioModel radio;
    std::uint64_t seed = 0;
};

// Fans (image, pair, variant) work items over a small pool; each result lands
// in its own slot, then rows are ordered by (image_id, variant, quality).
inline SweepReport sweep(const std::vector<std::pair<std::string, ImageU8>>& images,
                         const SweepPlan& plan, const RdnParams& params_v1,
                         const RdnParams& params_v2) {
    require(!plan.quality_pairs.empty(), "sweep needs at least one quality pair");
    require(!images.empty(), "sweep needs at least one image");
    // fail fast before any work
    require_scale(params_v1, 1);
    require_scale(params_v2, 4);

    struct Item {
        std::size_t image;
        int quality;
        int variant;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < images.size(); ++i)
        for (const auto& [q1, q2] : plan.quality_pairs) {
            items.push_back({i, q1, 1});
            items.push_back({i, q2, 2});
        }

    std::vector<PipelineResult> results(items.size());
    std::atomic<std::size_t> cursor{0};
    int workers = plan.workers > 0
                      ? plan.workers
                      : std::max(1u, std::thread::hardware_concurrency() / 2);
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mu;
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = cursor.fetch_add(1);
                if (i >= items.size() || failed.load()) break;
                const Item& it = items[i];
                try {
                    results[i] = it.variant == 1
                                     ? run_variant1(images[it.image].first, images[it.image].second,
                                                    it.quality, params_v1, plan.radio)
                                     : run_variant2(images[it.image].first, images[it.image].second,
                                                    it.quality, params_v2, plan.radio);
                } catch (const std::exception& e) {
                    std::lock_guard lock(error_mu);
                    if (!failed.exchange(true))
                        first_error = "image '" + images[it.image].first + "': " + e.what();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (failed.load()) throw error("sweep failed: " + first_error);

    SweepReport report;
    report.rows = std::move(results);
    std::sort(report.rows.begin(), report.rows.end(), [](const auto& a, const auto& b) {
        return std::tie(a.image_id, a.variant, a.quality) < std::tie(b.image_id, b.variant, b.quality);
    });
    report.model_v1 = params_v1.cfg;
    report.model_v2 = params_v2.cfg;
    report.radio = plan.radio;
    report.seed = plan.seed;

    for (const auto& [q1, q2] : plan.quality_pairs) {
        PairedRow row;
        row.quality_v1 = q1;
        row.quality_v2 = q2;
        double s1 = 0, s2 = 0, p1 = 0, p2 = 0, b1 = 0, b2 = 0;
        std::size_t n1 = 0, n2 = 0;
        for (const auto& r : report.rows) {
            if (r.variant == 1 && r.quality == q1) {
                s1 += r.ssim_restored;
                p1 += r.psnr_restored;
                b1 += static_cast<double>(r.bytes);
                ++n1;
            } else if (r.variant == 2 && r.quality == q2) {
                s2 += r.ssim_restored;
                p2 += r.psnr_restored;
                b2 += static_cast<double>(r.bytes);
                ++n2;
            }
        }
        require(n1 > 0 && n2 > 0, "paired row has no samples");
        row.mean_bytes_v1 = b1 / static_cast<double>(n1);
        row.mean_bytes_v2 = b2 / static_cast<double>(n2);
        row.ssim_diff = s1 / static_cast<double>(n1) - s2 / static_cast<double>(n2);
        row.psnr_diff = p1 / static_cast<double>(n1) - p2 / static_cast<double>(n2);
        row.size_ratio = row.mean_bytes_v2 / row.mean_bytes_v1;
        report.paired.push_back(row);
    }
    return report;
}

// ---- report emission ----

namespace detail {

inline std::string fmt_metric(double v) {
    if (std::isinf(v)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_metric(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    return std::stod(s);
}

}  // namespace detail

inline std::string rows_to_csv(const std::vector<PipelineResult>& rows) {
    std::string out =
        "image_id,variant,quality,bytes,ssim_degraded,psnr_degraded,ssim_restored,psnr_restored,"
        "energy_j\n";
    for (const auto& r : rows) {
        out += r.image_id + "," + std::to_string(r.variant) + "," + std::to_string(r.quality) +
               "," + std::to_string(r.bytes) + "," + detail::fmt_metric(r.ssim_degraded) + "," +
               detail::fmt_metric(r.psnr_degraded) + "," + detail::fmt_metric(r.ssim_restored) +
               "," + detail::fmt_metric(r.psnr_restored) + "," + detail::fmt_metric(r.energy_j) +
               "\n";
    }
    return out;
}

inline std::vector<PipelineResult> rows_from_csv(const std::string& csv) {
    std::vector<PipelineResult> rows;
    std::size_t pos = csv.find('\n');
    require(pos != std::string::npos, "empty CSV");
    while (pos + 1 < csv.size()) {
        std::size_t end = csv.find('\n', pos + 1);
        if (end == std::string::npos) end = csv.size();
        std::string line = csv.substr(pos + 1, end - pos - 1);
        pos = end;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        require(fields.size() == 9, "CSV row has wrong field count");
        PipelineResult r;
        r.image_id = fields[0];
        r.variant = std::stoi(fields[1]);
        r.quality = std::stoi(fields[2]);
        r.bytes = static_cast<std::size_t>(std::stoull(fields[3]));
        r.ssim_degraded = detail::parse_metric(fields[4]);
        r.psnr_degraded = detail::parse_metric(fields[5]);
        r.ssim_restored = detail::parse_metric(fields[6]);
        r.psnr_restored = detail::parse_metric(fields[7]);
        r.energy_j = detail::parse_metric(fields[8]);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::string paired_to_csv(const std::vector<PairedRow>& paired) {
    // ratio orientation: with-downscaling / without-downscaling (< 1 expected)
    std::string out =
        "quality_v1,quality_v2,mean_bytes_v1,mean_bytes_v2,ssim_diff_v1_minus_v2,"
        "psnr_diff_v1_minus_v2,size_ratio_v2_over_v1\n";
    for (const auto& p : paired) {
        out += std::to_string(p.quality_v1) + "," + std::to_string(p.quality_v2) + "," +
               detail::fmt_metric(p.mean_bytes_v1) + "," + detail::fmt_metric(p.mean_bytes_v2) +
               "," + detail::fmt_metric(p.ssim_diff) + "," + detail::fmt_metric(p.psnr_diff) +
               "," + detail::fmt_metric(p.size_ratio) + "\n";
    }
    return out;
}

inline nlohmann::json report_metadata(const SweepReport& report) {
    auto model_json = [](const RdnConfig& c) {
        return nlohmann::json{{"depth", c.depth},
                              {"convs_per_block", c.convs_per_block},
                              {"growth", c.growth},
                              {"base_channels", c.base_channels},
                              {"scale", c.scale},
                              {"predict_residual", c.predict_residual},
                              {"upnet_stages", c.upnet_stages}};
    };
    return nlohmann::json{
        {"seed", report.seed},
        {"metrics",
         {{"ssim_window", 11},
          {"ssim_sigma", 1.5},
          {"ssim_channels", "luma"},
          {"psnr_channels", "rgb-joint"},
          {"psnr_infinity", "inf"}}},
        {"codec",
         {{"subsample", "4:2:0 box"},
          {"quality_scaling", "libjpeg 5000/q | 200-2q"},
          {"huffman", "annex-k fixed"}}},
        {"resample", {{"filter", "bicubic catmull-rom a=-0.5"}, {"antialias", false}}},
        {"table_ratio_orientation", "with-downscaling/without-downscaling"},
        {"radio",
         {{"e_elec_j_per_bit", report.radio.e_elec},
          {"e_amp_j_per_bit_mgamma", report.radio.e_amp},
          {"distance_m", report.radio.distance},
          {"gamma", report.radio.gamma},
          {"note", "absolute joules are illustrative; the model supplies ratios"}}},
        {"model_v1", model_json(report.model_v1)},
        {"model_v2", model_json(report.model_v2)}};
}

inline nlohmann::json report_to_json(const SweepReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        rows.push_back({{"image_id", r.image_id},
                        {"variant", r.variant},
                        {"quality", r.quality},
                        {"bytes", r.bytes},
                        {"ssim_degraded", r.ssim_degraded},
                        {"psnr_degraded", detail::fmt_metric(r.psnr_degraded)},
                        {"ssim_restored", r.ssim_restored},
                        {"psnr_restored", detail::fmt_metric(r.psnr_restored)},
                        {"energy_j", r.energy_j}});
    }
    nlohmann::json paired = nlohmann::json::array();
    for (const auto& p : report.paired) {
        paired.push_back({{"quality_v1", p.quality_v1},
                          {"quality_v2", p.quality_v2},
                          {"mean_bytes_v1", p.mean_bytes_v1},
                          {"mean_bytes_v2", p.mean_bytes_v2},
                          {"ssim_diff", p.ssim_diff},
                          {"psnr_diff", p.psnr_diff},
                          {"size_ratio", p.size_ratio}});
    }
    return nlohmann::json{
        {"metadata", report_metadata(report)}, {"rows", rows}, {"paired", paired}};
}

// Inverse of report_to_json, for the report re-emission tool.
inline SweepReport report_from_json(const nlohmann::json& j) {
    SweepReport report;
    for (const auto& r : j.at("rows")) {
        PipelineResult row;
        row.image_id = r.at("image_id").get<std::string>();
        row.variant = r.at("variant").get<int>();
        row.quality = r.at("quality").get<int>();
        row.bytes = r.at("bytes").get<std::size_t>();
        row.ssim_degraded = r.at("ssim_degraded").get<double>();
        row.psnr_degraded = detail::parse_metric(r.at("psnr_degraded").get<std::string>());
        row.ssim_restored = r.at("ssim_restored").get<double>();
        row.psnr_restored = detail::parse_metric(r.at("psnr_restored").get<std::string>());
        row.energy_j = r.at("energy_j").get<double>();
        report.rows.push_back(std::move(row));
    }
    for (const auto& p : j.at("paired")) {
        PairedRow row;
        row.quality_v1 = p.at("quality_v1").get<int>();
        row.quality_v2 = p.at("quality_v2").get<int>();
        row.mean_bytes_v1 = p.at("mean_bytes_v1").get<double>();
        row.mean_bytes_v2 = p.at("mean_bytes_v2").get<double>();
        row.ssim_diff = p.at("ssim_diff").get<double>();
        row.psnr_diff = p.at("psnr_diff").get<double>();
        row.size_ratio = p.at("size_ratio").get<double>();
        report.paired.push_back(row);
    }
    if (j.contains("metadata")) report.seed = j["metadata"].value("seed", 0ull);
    return report;
}

// Writes detail rows (csv or json), the Table-1 style paired CSV, and run
// metadata. Returns the list of files written.
inline std::vector<std::string> emit_report(const SweepReport& report, const std::string& out_dir,
                                            const std::string& format) {
    require(format == "csv" || format == "json", "format must be csv or json");
    std::vector<std::string> written;
    auto write_text = [&](const std::string& name, const std::string& text) {
        std::string path = out_dir + "/" + name;
        write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
        written.push_back(path);
    };
    if (format == "csv") {
        write_text("sweep_rows.csv", rows_to_csv(report.rows));
        write_text("sweep_paired.csv", paired_to_csv(report.paired));
        write_text("sweep_metadata.json", report_metadata(report).dump(2) + "\n");
    } else {
        write_text("sweep.json", report_to_json(report).dump(2) + "\n");
        write_text("sweep_paired.csv", paired_to_csv(report.paired));
    }
    return written;
}

}  // namespace miot
