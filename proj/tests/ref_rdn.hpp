#pragma once

// Double-precision reference forward pass of the restoration network, wired
// independently from the library (naive refop convolutions, explicit concat).
// Parameters arrive as flat double vectors in RdnParams::for_each_named order.

#include <vector>

#include "miot/rdn.hpp"
#include "ref_ops.hpp"

namespace refrdn {

// returns (3, scale*H, scale*W) flattened
inline refop::Vec forward(const miot::RdnConfig& cfg, const std::vector<refop::Vec>& p,
                          const refop::Vec& x, int H, int W) {
    std::size_t pi = 0;
    auto next_pair = [&]() {
        const refop::Vec& w = p[pi];
        const refop::Vec& b = p[pi + 1];
        pi += 2;
        return std::pair<const refop::Vec*, const refop::Vec*>(&w, &b);
    };

    int g0 = cfg.base_channels, g = cfg.growth;
    auto [w_sfe1, b_sfe1] = next_pair();
    refop::Vec f_minus1 = refop::conv2d(x, cfg.channels, H, W, *w_sfe1, g0, 3, *b_sfe1);
    auto [w_sfe2, b_sfe2] = next_pair();
    refop::Vec f0 = refop::conv2d(f_minus1, g0, H, W, *w_sfe2, g0, 3, *b_sfe2);

    refop::Vec cur = f0;
    refop::Vec rdb_cat;
    for (int d = 0; d < cfg.depth; ++d) {
        refop::Vec feats = cur;
        int ch = g0;
        for (int i = 0; i < cfg.convs_per_block; ++i) {
            auto [w, b] = next_pair();
            refop::Vec y = refop::conv2d(feats, ch, H, W, *w, g, 3, *b, /*relu=*/true);
            feats.insert(feats.end(), y.begin(), y.end());
            ch += g;
        }
        auto [w_lff, b_lff] = next_pair();
        refop::Vec lff = refop::conv2d(feats, ch, H, W, *w_lff, g0, 1, *b_lff);
        cur = refop::add(lff, cur);
        rdb_cat.insert(rdb_cat.end(), cur.begin(), cur.end());
    }

    auto [w_gff1, b_gff1] = next_pair();
    refop::Vec gf = refop::conv2d(rdb_cat, cfg.depth * g0, H, W, *w_gff1, g0, 1, *b_gff1);
    auto [w_gff2, b_gff2] = next_pair();
    gf = refop::conv2d(gf, g0, H, W, *w_gff2, g0, 3, *b_gff2);
    refop::Vec fused = refop::add(gf, f_minus1);

    refop::Vec up = fused;
    int uh = H, uw = W;
    if (cfg.scale == 4) {
        if (cfg.upnet_stages == 1) {
            auto [w, b] = next_pair();
            refop::Vec c = refop::conv2d(up, g0, uh, uw, *w, g0 * 16, 3, *b);
            up = refop::pixel_shuffle(c, g0, uh, uw, 4);
            uh *= 4;
            uw *= 4;
        } else {
            for (int s = 0; s < 2; ++s) {
                auto [w, b] = next_pair();
                refop::Vec c = refop::conv2d(up, g0, uh, uw, *w, g0 * 4, 3, *b);
                up = refop::pixel_shuffle(c, g0, uh, uw, 2);
                uh *= 2;
                uw *= 2;
            }
        }
    }
    auto [w_fin, b_fin] = next_pair();
    return refop::conv2d(up, g0, uh, uw, *w_fin, cfg.channels, 3, *b_fin);
}

}  // namespace refrdn
