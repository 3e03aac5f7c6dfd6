#pragma once

// The restoration network: shallow feature extraction (two convs), D
// residual dense blocks (C densely-connected 3x3 convs + 1x1 local fusion +
// local residual add), global feature fusion over all block outputs, a
// global residual connection onto the first shallow feature map, an optional
// sub-pixel up-sampling tail, and a 3-channel projection.
//
// Weights file ("RDNW"): magic | version u8=1 | D,C,G,G0,scale,channels as
// u16 LE | per layer: name_len u16 + name + rank u8 + dims u32 each + f32 LE
// values. Two rank-1 "meta.*" entries carry the residual-composition flag
// and the up-sampler stage count using the same per-layer grammar.

#include <cstring>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "miot/image.hpp"
#include "miot/nn/adam.hpp"
#include "miot/nn/ops.hpp"
#include "miot/resample.hpp"

namespace miot {

struct RdnConfig {
    int depth = 4;            // D: residual dense blocks
    int convs_per_block = 8;  // C
    int growth = 16;          // G: channels added by each dense conv
    int base_channels = 32;   // G0
    int scale = 1;            // 1 (denoise) or 4 (denoise + super-resolve)
    int channels = 3;
    bool predict_residual = true;  // restored = clamp(upsampled input + net output)
    int upnet_stages = 1;          // 1: conv+shuffle(x4); 2: two conv+shuffle(x2)

    bool operator==(const RdnConfig&) const = default;
};

inline void validate(const RdnConfig& c) {
    require(c.depth >= 1 && c.convs_per_block >= 1 && c.growth >= 1 && c.base_channels >= 1,
            "RDN config values must be positive");
    require(c.scale == 1 || c.scale == 4, "scale must be 1 or 4");
    require(c.channels == 3, "model output is 3 channels");
    require(c.upnet_stages == 1 || c.upnet_stages == 2, "upnet_stages must be 1 or 2");
}

struct ConvParam {
    nn::Tensor w, b;
};

struct RdnParams {
    RdnConfig cfg;
    ConvParam sfe1, sfe2;
    struct Rdb {
        std::vector<ConvParam> convs;
        ConvParam lff;
    };
    std::vector<Rdb> blocks;
    ConvParam gff1, gff2;
    std::vector<ConvParam> upnet;  // empty when scale == 1
    ConvParam final_conv;

    std::vector<nn::Tensor> all() const {
        std::vector<nn::Tensor> out;
        const_cast<RdnParams*>(this)->for_each_named(
            [&](const std::string&, nn::Tensor& t) { out.push_back(t); });
        return out;
    }

    template <typename F>
    void for_each_named(F&& f) {
        f("sfe1.w", sfe1.w);
        f("sfe1.b", sfe1.b);
        f("sfe2.w", sfe2.w);
        f("sfe2.b", sfe2.b);
        for (std::size_t d = 0; d < blocks.size(); ++d) {
            std::string prefix = "rdb" + std::to_string(d + 1) + ".";
            for (std::size_t i = 0; i < blocks[d].convs.size(); ++i) {
                std::string name = prefix + "conv" + std::to_string(i + 1);
                f(name + ".w", blocks[d].convs[i].w);
                f(name + ".b", blocks[d].convs[i].b);
            }
            f(prefix + "lff.w", blocks[d].lff.w);
            f(prefix + "lff.b", blocks[d].lff.b);
        }
        f("gff1.w", gff1.w);
        f("gff1.b", gff1.b);
        f("gff2.w", gff2.w);
        f("gff2.b", gff2.b);
        for (std::size_t u = 0; u < upnet.size(); ++u) {
            std::string name = "up" + std::to_string(u + 1);
            f(name + ".w", upnet[u].w);
            f(name + ".b", upnet[u].b);
        }
        f("final.w", final_conv.w);
        f("final.b", final_conv.b);
    }
};

namespace detail {

inline ConvParam make_conv(int oc, int ic, int k) {
    ConvParam p;
    p.w = nn::Tensor::zeros({oc, ic, k, k}, true);
    p.b = nn::Tensor::zeros({oc}, true);
    return p;
}

}  // namespace detail

// Allocate all parameter tensors (zero-filled) for a config.
inline RdnParams make_params(const RdnConfig& cfg) {
    validate(cfg);
    RdnParams p;
    p.cfg = cfg;
    int g0 = cfg.base_channels, g = cfg.growth;
    p.sfe1 = detail::make_conv(g0, cfg.channels, 3);
    p.sfe2 = detail::make_conv(g0, g0, 3);
    p.blocks.resize(static_cast<std::size_t>(cfg.depth));
    for (auto& blk : p.blocks) {
        for (int i = 0; i < cfg.convs_per_block; ++i)
            blk.convs.push_back(detail::make_conv(g, g0 + i * g, 3));
        blk.lff = detail::make_conv(g0, g0 + cfg.convs_per_block * g, 1);
    }
    p.gff1 = detail::make_conv(g0, cfg.depth * g0, 1);
    p.gff2 = detail::make_conv(g0, g0, 3);
    if (cfg.scale == 4) {
        if (cfg.upnet_stages == 1) {
            p.upnet.push_back(detail::make_conv(g0 * 16, g0, 3));
        } else {
            p.upnet.push_back(detail::make_conv(g0 * 4, g0, 3));
            p.upnet.push_back(detail::make_conv(g0 * 4, g0, 3));
        }
    }
    p.final_conv = detail::make_conv(cfg.channels, g0, 3);
    return p;
}

// Deterministic initialization. Dense (ReLU) convs get He scaling
// sqrt(2/fan_in); interior linear convs get sqrt(1/fan_in) so activations do
// not blow up through the residual adds; the final projection starts near
// zero so a fresh model reproduces its residual skip almost exactly.
inline RdnParams init_params(const RdnConfig& cfg, std::uint64_t seed) {
    RdnParams p = make_params(cfg);
    Rng rng(seed);
    p.for_each_named([&](const std::string& name, nn::Tensor& t) {
        if (name.ends_with(".b")) return;  // biases stay zero
        int fan_in = t.dim(1) * t.dim(2) * t.dim(3);
        double std_dev;
        if (name.rfind("rdb", 0) == 0 && name.find(".conv") != std::string::npos)
            std_dev = std::sqrt(2.0 / fan_in);
        else if (name.rfind("final", 0) == 0)
            std_dev = 0.01;
        else
            std_dev = std::sqrt(1.0 / fan_in);
        for (auto& v : t.values()) v = static_cast<float>(std_dev * rng.normal());
    });
    return p;
}

struct ForwardOptions {
    bool global_residual = true;
};

// Runs the network graph; output dims are (3, scale*h, scale*w), unclamped.
inline nn::Tensor rdn_forward(const RdnParams& p, const nn::Tensor& x,
                              const ForwardOptions& opt = {}) {
    const RdnConfig& cfg = p.cfg;
    bool batched = x.rank() == 4;
    require(x.rank() == 3 || batched, "input must be (C,H,W) or (B,C,H,W)");
    require(x.dim(batched ? 1 : 0) == cfg.channels, "input channel count mismatch");
    require(x.dim(batched ? 2 : 1) >= 16 && x.dim(batched ? 3 : 2) >= 16,
            "input spatial dims must be at least 16");

    using nn::Tensor;
    auto conv = [](const Tensor& in, const ConvParam& c) { return nn::conv2d(in, c.w, c.b); };

    Tensor f_minus1 = conv(x, p.sfe1);
    Tensor f0 = conv(f_minus1, p.sfe2);

    std::vector<Tensor> rdb_outs;
    Tensor cur = f0;
    for (const auto& blk : p.blocks) {
        std::vector<Tensor> feats{cur};
        for (const auto& c : blk.convs) {
            Tensor y = nn::conv2d_group(feats, c.w, c.b, /*fuse_relu=*/true);
            feats.push_back(y);
        }
        Tensor lff = nn::conv2d_group(feats, blk.lff.w, blk.lff.b, false);
        cur = nn::add(lff, cur);  // local residual: block output stays at G0 channels
        rdb_outs.push_back(cur);
    }

    Tensor gf = nn::conv2d_group(rdb_outs, p.gff1.w, p.gff1.b, false);
    gf = conv(gf, p.gff2);
    Tensor fused = opt.global_residual ? nn::add(gf, f_minus1) : gf;

    Tensor up = fused;
    if (cfg.scale == 4) {
        if (cfg.upnet_stages == 1) {
            up = nn::pixel_shuffle(conv(up, p.upnet[0]), 4);
        } else {
            up = nn::pixel_shuffle(conv(up, p.upnet[0]), 2);
            up = nn::pixel_shuffle(conv(up, p.upnet[1]), 2);
        }
    }
    return conv(up, p.final_conv);
}

// ---- residual-skip helpers ----

// Bicubic upscale of a (B?,C,H,W) tensor, gradient-free (used as the skip
// path for scale-4 models and as the variant-2 evaluation baseline).
inline nn::Tensor upscale_tensor(const nn::Tensor& x, int r) {
    if (r == 1) return x;
    bool batched = x.rank() == 4;
    int batch = batched ? x.dim(0) : 1;
    int c = x.dim(batched ? 1 : 0), h = x.dim(batched ? 2 : 1), w = x.dim(batched ? 3 : 2);
    nn::Tensor out = batched ? nn::Tensor::zeros({batch, c, r * h, r * w})
                             : nn::Tensor::zeros({c, r * h, r * w});
    std::vector<double> plane(static_cast<std::size_t>(h) * w);
    for (int s = 0; s < batch; ++s)
        for (int ch = 0; ch < c; ++ch) {
            const float* src =
                x.data() + (static_cast<std::size_t>(s) * c + ch) * static_cast<std::size_t>(h) * w;
            for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = src[i];
            std::vector<double> up = resize_plane(plane, w, h, r * w, r * h);
            float* dst = out.data() + (static_cast<std::size_t>(s) * c + ch) *
                                          static_cast<std::size_t>(r * h) * (r * w);
            for (std::size_t i = 0; i < up.size(); ++i) dst[i] = static_cast<float>(up[i]);
        }
    return out;
}

inline nn::Tensor image_to_tensor(const ImageF32& img) {
    std::vector<float> data;
    data.reserve(img.pixel_count() * img.planes.size());
    for (const auto& p : img.planes) data.insert(data.end(), p.begin(), p.end());
    return nn::Tensor::from(std::move(data),
                            {static_cast<int>(img.planes.size()), img.height, img.width});
}

inline ImageF32 tensor_to_image(const nn::Tensor& t, Colorspace cs, bool clamp01 = true) {
    require(t.rank() == 3, "tensor_to_image expects (C,H,W)");
    ImageF32 img(t.dim(2), t.dim(1), cs);
    require(static_cast<int>(img.planes.size()) == t.dim(0), "channel count mismatch");
    std::size_t hw = img.pixel_count();
    for (std::size_t p = 0; p < img.planes.size(); ++p)
        for (std::size_t i = 0; i < hw; ++i) {
            float v = t.data()[p * hw + i];
            img.planes[p][i] = clamp01 ? clamp(v, 0.0f, 1.0f) : v;
        }
    return img;
}

// Full restoration of one degraded u8 image: forward pass plus the residual
// skip when the model was trained that way, clamped and quantized to u8.
inline ImageU8 restore_image(const RdnParams& p, const ImageU8& degraded) {
    require(degraded.colorspace == Colorspace::RGB, "restoration operates on RGB images");
    nn::NoGradGuard inference;
    nn::Tensor x = image_to_tensor(to_unit_float(degraded));
    nn::Tensor y = rdn_forward(p, x);
    if (p.cfg.predict_residual) y = nn::add(y, upscale_tensor(x, p.cfg.scale));
    return to_u8(tensor_to_image(y, Colorspace::RGB));
}

// ---- serialization ----

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

struct WeightsCursor {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    std::string context = "header";

    void need(std::size_t n) {
        if (pos + n > bytes.size())
            throw model_error("weights file truncated in " + context);
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
};

inline void append_entry(std::vector<std::uint8_t>& out, const std::string& name,
                         const std::vector<int>& shape, const float* data, std::size_t count) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(shape.size()));
    for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    std::size_t off = out.size();
    out.resize(off + count * sizeof(float));
    std::memcpy(out.data() + off, data, count * sizeof(float));
}

}  // namespace detail

inline std::vector<std::uint8_t> save_weights(const RdnParams& params) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'R', 'D', 'N', 'W'});
    out.push_back(1);
    const RdnConfig& c = params.cfg;
    for (int v : {c.depth, c.convs_per_block, c.growth, c.base_channels, c.scale, c.channels})
        detail::put_u16(out, static_cast<std::uint16_t>(v));
    const_cast<RdnParams&>(params).for_each_named([&](const std::string& name, nn::Tensor& t) {
        detail::append_entry(out, name, t.shape(), t.data(), t.numel());
    });
    float residual = c.predict_residual ? 1.0f : 0.0f;
    detail::append_entry(out, "meta.predict_residual", {1}, &residual, 1);
    float stages = static_cast<float>(c.upnet_stages);
    detail::append_entry(out, "meta.upnet_stages", {1}, &stages, 1);
    return out;
}

inline RdnParams load_weights(const std::vector<std::uint8_t>& bytes) {
    detail::WeightsCursor cur{bytes};
    cur.need(5);
    if (bytes[0] != 'R' || bytes[1] != 'D' || bytes[2] != 'N' || bytes[3] != 'W')
        throw model_error("not an RDNW weights file (bad magic)");
    cur.pos = 4;
    if (cur.u8() != 1) throw model_error("unsupported weights version");
    RdnConfig cfg;
    cfg.depth = cur.u16();
    cfg.convs_per_block = cur.u16();
    cfg.growth = cur.u16();
    cfg.base_channels = cur.u16();
    cfg.scale = cur.u16();
    cfg.channels = cur.u16();

    struct Entry {
        std::vector<int> shape;
        std::vector<float> data;
    };
    std::map<std::string, Entry> entries;
    while (cur.pos < bytes.size()) {
        cur.context = "layer name";
        std::uint16_t name_len = cur.u16();
        cur.need(name_len);
        std::string name(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos),
                         bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos + name_len));
        cur.pos += name_len;
        cur.context = "layer '" + name + "'";
        int rank = cur.u8();
        if (rank < 1 || rank > 4) throw model_error("bad rank in " + cur.context);
        Entry e;
        std::size_t count = 1;
        for (int i = 0; i < rank; ++i) {
            std::uint32_t d = cur.u32();
            if (d == 0 || d > (1u << 24)) throw model_error("bad dimension in " + cur.context);
            e.shape.push_back(static_cast<int>(d));
            count *= d;
        }
        cur.need(count * sizeof(float));
        e.data.resize(count);
        std::memcpy(e.data.data(), bytes.data() + cur.pos, count * sizeof(float));
        cur.pos += count * sizeof(float);
        if (!entries.emplace(name, std::move(e)).second)
            throw model_error("duplicate layer '" + name + "' in weights file");
    }

    if (auto it = entries.find("meta.upnet_stages"); it != entries.end()) {
        cfg.upnet_stages = static_cast<int>(it->second.data.at(0));
        entries.erase(it);
    }
    if (auto it = entries.find("meta.predict_residual"); it != entries.end()) {
        cfg.predict_residual = it->second.data.at(0) != 0.0f;
        entries.erase(it);
    }

    RdnParams params = make_params(cfg);
    params.for_each_named([&](const std::string& name, nn::Tensor& t) {
        auto it = entries.find(name);
        if (it == entries.end()) throw model_error("weights file is missing layer '" + name + "'");
        if (it->second.shape != t.shape())
            throw model_error("shape mismatch for layer '" + name + "'");
        std::copy(it->second.data.begin(), it->second.data.end(), t.values().begin());
        entries.erase(it);
    });
    if (!entries.empty())
        throw model_error("weights file has unexpected layer '" + entries.begin()->first + "'");
    return params;
}

// Guard used by pipelines that need a model of a specific scale.
inline void require_scale(const RdnParams& p, int scale) {
    if (p.cfg.scale != scale)
        throw model_error("model was trained for scale " + std::to_string(p.cfg.scale) +
                          ", pipeline needs scale " + std::to_string(scale));
}

}  // namespace miot
