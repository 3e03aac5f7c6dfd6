// miotsr: edge-side compression and server-side restoration for image
// transport on constrained devices.
//
// Subcommands: synth, encode, decode, prepare-data, train, restore, sweep,
// report. A TOML-style key=value file (--config) supplies defaults; command
// line flags override it. Exit codes: 0 ok, 1 usage, 2 data error, 3 model
// error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "miot/harness.hpp"
#include "miot/synth.hpp"
#include "miot/train.hpp"

namespace fs = std::filesystem;
using namespace miot;

namespace {

std::vector<std::string> list_ppm_sorted(const std::string& dir) {
    std::vector<std::string> paths;
    if (!fs::is_directory(dir)) throw error("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        if (ext == ".ppm" || ext == ".pgm") paths.push_back(entry.path().string());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw error("no .ppm/.pgm files in " + dir);
    return paths;
}

std::vector<ImageU8> load_dataset(const std::string& dir) {
    std::vector<ImageU8> images;
    for (const auto& path : list_ppm_sorted(dir)) images.push_back(load_ppm(path));
    return images;
}

RadioModel parse_radio(const std::string& spec) {
    RadioModel rm;
    if (spec.empty()) return rm;
    double vals[4];
    if (std::sscanf(spec.c_str(), "%lf,%lf,%lf,%lf", &vals[0], &vals[1], &vals[2], &vals[3]) != 4)
        throw error("--radio expects e_elec,e_amp,d,gamma");
    rm.e_elec = vals[0];
    rm.e_amp = vals[1];
    rm.distance = vals[2];
    rm.gamma = vals[3];
    return rm;
}

std::vector<int> parse_int_list(const std::string& spec) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < spec.size()) {
        std::size_t comma = spec.find(',', pos);
        out.push_back(std::stoi(spec.substr(pos, comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::vector<std::pair<int, int>> parse_pairs(const std::string& spec) {
    // "1:10,5:20" -> {(1,10),(5,20)}
    std::vector<std::pair<int, int>> out;
    std::size_t pos = 0;
    while (pos < spec.size()) {
        std::size_t comma = spec.find(',', pos);
        std::string item = spec.substr(pos, comma - pos);
        std::size_t colon = item.find(':');
        if (colon == std::string::npos) throw error("--pairs expects q1:q2[,q1:q2...]");
        out.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

bool is_miot_container(const std::vector<std::uint8_t>& bytes) {
    return bytes.size() >= 4 && bytes[0] == 'M' && bytes[1] == 'I' && bytes[2] == 'O' &&
           bytes[3] == 'T';
}

int run(int argc, char** argv) {
    CLI::App app{"compressed-image transport with learned restoration"};
    app.set_config("--config", "", "key=value defaults file, overridable by flags");
    app.require_subcommand(1);

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate deterministic synthetic source images");
    std::string synth_out;
    int synth_count = 24, synth_w = 768, synth_h = 512;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--count", synth_count, "number of images");
    synth->add_option("--width", synth_w, "image width");
    synth->add_option("--height", synth_h, "image height");
    synth->add_option("--seed", synth_seed, "base seed");
    synth->callback([&] {
        fs::create_directories(synth_out);
        for (int i = 0; i < synth_count; ++i) {
            char name[64];
            std::snprintf(name, sizeof name, "synth_%05d.ppm", i);
            store_ppm(synth_out + "/" + name,
                      synth_image(synth_seed + static_cast<std::uint64_t>(i), synth_w, synth_h));
        }
        std::fprintf(stderr, "wrote %d images to %s\n", synth_count, synth_out.c_str());
    });

    // ---- encode ----
    auto* enc = app.add_subcommand("encode", "compress a PPM image (edge side)");
    std::string enc_in, enc_out;
    int enc_quality = 50, enc_scale = 1;
    bool enc_no_subsample = false;
    enc->add_option("--in", enc_in, "input .ppm/.pgm")->required();
    enc->add_option("--out", enc_out, "output .miot bitstream")->required();
    enc->add_option("--quality", enc_quality, "quality 1-100")->check(CLI::Range(1, 100));
    enc->add_option("--scale", enc_scale, "down-scale factor before compression (1 or 4)")
        ->check(CLI::IsMember({1, 4}));
    enc->add_flag("--no-subsample", enc_no_subsample, "disable 4:2:0 chroma subsampling");
    enc->callback([&] {
        ImageU8 img = load_ppm(enc_in);
        codec::EncodeOptions opt;
        opt.subsample = !enc_no_subsample;
        opt.scale_factor = enc_scale;
        if (enc_scale > 1) {
            int pw = (img.width + enc_scale - 1) / enc_scale * enc_scale;
            int ph = (img.height + enc_scale - 1) / enc_scale * enc_scale;
            img = downscale(pad_edge(img, pw, ph), enc_scale);
        }
        std::vector<std::uint8_t> bits = codec::encode(img, enc_quality, opt);
        write_file(enc_out, bits);
        std::fprintf(stderr, "%s: %zu bytes (q=%d, scale=%d)\n", enc_out.c_str(), bits.size(),
                     enc_quality, enc_scale);
    });

    // ---- decode ----
    auto* dec = app.add_subcommand("decode", "decompress a bitstream (server side)");
    std::string dec_in, dec_out;
    bool dec_upscale = false;
    dec->add_option("--in", dec_in, "input .miot bitstream")->required();
    dec->add_option("--out", dec_out, "output .ppm")->required();
    dec->add_flag("--upscale", dec_upscale,
                  "bicubic-upscale by the header scale factor (variant-2 baseline)");
    dec->callback([&] {
        std::vector<std::uint8_t> bits = read_file(dec_in);
        codec::BitstreamHeader h = codec::read_header(bits);
        ImageU8 img = codec::decode(bits);
        if (dec_upscale && h.scale_factor > 1) img = upscale_bicubic(img, h.scale_factor);
        store_ppm(dec_out, img);
    });

    // ---- prepare-data ----
    auto* prep = app.add_subcommand("prepare-data",
                                    "resize+crop sources into 256x256 training images");
    std::string prep_in, prep_out;
    std::uint64_t prep_seed = 0;
    int prep_count = 0;
    prep->add_option("--in", prep_in, "directory of source .ppm images")->required();
    prep->add_option("--out", prep_out, "output directory")->required();
    prep->add_option("--seed", prep_seed, "base seed");
    prep->add_option("--count", prep_count, "stop after this many prepared images (0: all)");
    prep->callback([&] {
        fs::create_directories(prep_out);
        int written = 0, skipped = 0, index = 0;
        for (const auto& path : list_ppm_sorted(prep_in)) {
            if (prep_count > 0 && written >= prep_count) break;
            auto out = random_resize_crop(load_ppm(path), prep_seed + static_cast<std::uint64_t>(index++));
            if (!out) {
                std::fprintf(stderr, "skipped (too small): %s\n", path.c_str());
                ++skipped;
                continue;
            }
            char name[64];
            std::snprintf(name, sizeof name, "prepared_%05d.ppm", written);
            store_ppm(prep_out + "/" + name, *out);
            ++written;
        }
        std::fprintf(stderr, "prepared %d images (%d skipped) in %s\n", written, skipped,
                     prep_out.c_str());
    });

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train a restoration model for one variant");
    std::string tr_dataset, tr_out, tr_quality_set, tr_trace;
    TrainPlan tr_plan;
    RdnConfig tr_cfg;
    bool tr_l2 = false, tr_no_residual = false;
    tr->add_option("--dataset", tr_dataset, "directory of prepared 256x256 .ppm images")
        ->required();
    tr->add_option("--out", tr_out, "output weights file (.rdnw)")->required();
    tr->add_option("--variant", tr_plan.variant, "1: denoise, 2: x4 super-resolve")
        ->check(CLI::IsMember({1, 2}));
    tr->add_option("--steps", tr_plan.steps, "optimizer steps");
    tr->add_option("--batch", tr_plan.batch, "mini-batch size");
    tr->add_option("--patch", tr_plan.patch, "target patch size (96-192)");
    tr->add_option("--quality-set", tr_quality_set, "comma list of training qualities");
    tr->add_option("--seed", tr_plan.seed, "training seed");
    tr->add_option("--lr", tr_plan.lr, "Adam learning rate");
    tr->add_option("--depth", tr_cfg.depth, "residual dense blocks (D)");
    tr->add_option("--convs", tr_cfg.convs_per_block, "convs per block (C)");
    tr->add_option("--growth", tr_cfg.growth, "growth channels (G)");
    tr->add_option("--base-channels", tr_cfg.base_channels, "base feature channels (G0)");
    tr->add_option("--upnet-stages", tr_cfg.upnet_stages, "1: one x4 stage, 2: two x2 stages");
    tr->add_flag("--l2", tr_l2, "mean-squared loss instead of mean-absolute");
    tr->add_flag("--direct", tr_no_residual, "predict the full image instead of a correction");
    tr->add_option("--loss-trace", tr_trace, "write the per-step loss trace CSV here");
    tr->callback([&] {
        tr_cfg.scale = tr_plan.variant == 2 ? 4 : 1;
        tr_cfg.predict_residual = !tr_no_residual;
        tr_plan.l2 = tr_l2;
        if (!tr_quality_set.empty()) tr_plan.quality_set = parse_int_list(tr_quality_set);
        std::vector<ImageU8> dataset = load_dataset(tr_dataset);
        std::fprintf(stderr, "training variant %d on %zu images (%zu held out)\n",
                     tr_plan.variant, dataset.size(), dataset.size() - train_partition(dataset.size()));
        TrainResult result = train(tr_cfg, tr_plan, dataset, [](int step, float loss) {
            std::fprintf(stderr, "step %5d  loss %.6f\n", step, loss);
        });
        write_file(tr_out, save_weights(result.params));
        if (!tr_trace.empty()) {
            std::string csv = "step,loss\n";
            for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
                csv += std::to_string(i) + "," + std::to_string(result.loss_trace[i]) + "\n";
            write_file(tr_trace, std::vector<std::uint8_t>(csv.begin(), csv.end()));
        }
        std::fprintf(stderr, "wrote %s\n", tr_out.c_str());
    });

    // ---- restore ----
    auto* rest = app.add_subcommand("restore", "run the model on a degraded image");
    std::string rest_in, rest_out, rest_model;
    rest->add_option("--in", rest_in, "degraded .ppm or .miot bitstream")->required();
    rest->add_option("--model", rest_model, "weights file")->required();
    rest->add_option("--out", rest_out, "restored .ppm")->required();
    rest->callback([&] {
        std::vector<std::uint8_t> bytes = read_file(rest_in);
        ImageU8 degraded = is_miot_container(bytes) ? codec::decode(bytes) : read_ppm(bytes);
        RdnParams params = load_weights(read_file(rest_model));
        store_ppm(rest_out, restore_image(params, degraded));
    });

    // ---- sweep ----
    auto* sw = app.add_subcommand("sweep", "rate/quality/energy sweep over a test corpus");
    std::string sw_dataset, sw_out, sw_model1, sw_model2, sw_pairs, sw_radio;
    std::string sw_format = "csv";
    std::uint64_t sw_seed = 0;
    int sw_workers = 0;
    sw->add_option("--dataset", sw_dataset, "directory of test .ppm images")->required();
    sw->add_option("--model1", sw_model1, "variant-1 weights")->required();
    sw->add_option("--model2", sw_model2, "variant-2 weights")->required();
    sw->add_option("--out", sw_out, "report directory")->required();
    sw->add_option("--format", sw_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sw->add_option("--pairs", sw_pairs, "quality pairs q1:q2[,...] (default: the seven table rows)");
    sw->add_option("--radio", sw_radio, "radio model e_elec,e_amp,d,gamma");
    sw->add_option("--seed", sw_seed, "recorded in the report");
    sw->add_option("--workers", sw_workers, "worker threads (0: auto)");
    sw->callback([&] {
        RdnParams p1 = load_weights(read_file(sw_model1));
        RdnParams p2 = load_weights(read_file(sw_model2));
        SweepPlan plan;
        if (!sw_pairs.empty()) plan.quality_pairs = parse_pairs(sw_pairs);
        plan.radio = parse_radio(sw_radio);
        plan.seed = sw_seed;
        plan.workers = sw_workers;
        std::vector<std::pair<std::string, ImageU8>> corpus;
        for (const auto& path : list_ppm_sorted(sw_dataset))
            corpus.emplace_back(fs::path(path).stem().string(), load_ppm(path));
        SweepReport report = sweep(corpus, plan, p1, p2);
        fs::create_directories(sw_out);
        for (const auto& f : emit_report(report, sw_out, sw_format))
            std::fprintf(stderr, "wrote %s\n", f.c_str());
        for (const auto& pr : report.paired)
            std::fprintf(stderr,
                         "pair (%2d, %2d): ssim_diff %+0.4f  psnr_diff %+0.3f  size_ratio %.3f\n",
                         pr.quality_v1, pr.quality_v2, pr.ssim_diff, pr.psnr_diff, pr.size_ratio);
    });

    // ---- report ----
    auto* rep = app.add_subcommand("report", "re-emit CSV tables from a sweep JSON report");
    std::string rep_in, rep_out;
    std::string rep_format = "csv";
    rep->add_option("--in", rep_in, "sweep.json from a previous run")->required();
    rep->add_option("--out", rep_out, "output directory")->required();
    rep->add_option("--format", rep_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    rep->callback([&] {
        std::vector<std::uint8_t> bytes = read_file(rep_in);
        nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, true);
        SweepReport report = report_from_json(j);
        fs::create_directories(rep_out);
        std::string csv = rows_to_csv(report.rows);
        write_file(rep_out + "/sweep_rows.csv", std::vector<std::uint8_t>(csv.begin(), csv.end()));
        std::string paired = paired_to_csv(report.paired);
        write_file(rep_out + "/sweep_paired.csv",
                   std::vector<std::uint8_t>(paired.begin(), paired.end()));
        double mean_gain_ssim[3] = {0, 0, 0};
        std::size_t counts[3] = {0, 0, 0};
        for (const auto& r : report.rows) {
            mean_gain_ssim[r.variant] += r.ssim_restored - r.ssim_degraded;
            ++counts[r.variant];
        }
        for (int v : {1, 2})
            if (counts[v])
                std::fprintf(stderr, "variant %d: mean SSIM gain %+.4f over %zu rows\n", v,
                             mean_gain_ssim[v] / static_cast<double>(counts[v]), counts[v]);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const model_error& e) {
        std::fprintf(stderr, "model error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
