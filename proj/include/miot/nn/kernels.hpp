#pragma once

// Convolution kernels. The layout trick: work is tiled into panels of 16
// horizontally-consecutive output pixels. The im2col slice for a panel is
// packed K-major (K = in_channels * k * k) so both operand streams are
// contiguous, then a 16x16 outer-product microkernel does the arithmetic.
// AVX-512 when available, portable scalar loops otherwise. All loops assign
// each output element to exactly one writer, so results are reproducible.
//
// Geometry is fixed to what the model needs: stride 1, odd k (1 or 3),
// zero 'same' padding.

#include <cstring>
#include <vector>

#include "miot/common.hpp"

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace miot::nn::kern {

inline constexpr int kLanes = 16;

// Weights packed per 16-wide output-channel block, K-major:
// panel(b)[k][i] = w[(b*16+i), k], zero-padded in i.
struct PackedWeights {
    std::vector<float> data;
    int K = 0;
    int oc = 0;
    int blocks = 0;

    const float* block(int b) const { return data.data() + static_cast<std::size_t>(b) * K * kLanes; }
};

inline PackedWeights pack_weights(const float* w, int oc, int K) {
    PackedWeights pw;
    pw.K = K;
    pw.oc = oc;
    pw.blocks = (oc + kLanes - 1) / kLanes;
    pw.data.assign(static_cast<std::size_t>(pw.blocks) * K * kLanes, 0.0f);
    for (int o = 0; o < oc; ++o) {
        int b = o / kLanes, lane = o % kLanes;
        float* dst = pw.data.data() + static_cast<std::size_t>(b) * K * kLanes + lane;
        const float* src = w + static_cast<std::size_t>(o) * K;
        for (int k = 0; k < K; ++k) dst[static_cast<std::size_t>(k) * kLanes] = src[k];
    }
    return pw;
}

// ---- panel construction (im2col slice for 16 pixels of one output row) ----

// groups: per-group plane base pointers (ch, H, W) row-major; panel rows are
// ordered (group, channel, dy, dx) to match the weight layout.
inline void build_panel(const float* const* groups, const int* gch, int ngroups, int H, int W,
                        int y, int x0, int k, float* panel) {
    int lanes = W - x0 < kLanes ? W - x0 : kLanes;
    float* row = panel;
    for (int g = 0; g < ngroups; ++g) {
        for (int c = 0; c < gch[g]; ++c) {
            const float* plane = groups[g] + static_cast<std::size_t>(c) * H * W;
            if (k == 1) {
                const float* src = plane + static_cast<std::size_t>(y) * W + x0;
                int j = 0;
                for (; j < lanes; ++j) row[j] = src[j];
                for (; j < kLanes; ++j) row[j] = 0.0f;
                row += kLanes;
            } else {
                for (int dy = -1; dy <= 1; ++dy) {
                    int sy = y + dy;
                    if (sy < 0 || sy >= H) {
                        std::memset(row, 0, 3 * kLanes * sizeof(float));
                        row += 3 * kLanes;
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(sy) * W;
                    for (int dx = -1; dx <= 1; ++dx) {
                        int sx0 = x0 + dx;
                        if (lanes == kLanes && sx0 >= 0 && sx0 + kLanes <= W) {
                            std::memcpy(row, src + sx0, kLanes * sizeof(float));
                        } else {
                            for (int j = 0; j < kLanes; ++j) {
                                int sx = sx0 + j;
                                row[j] = (j < lanes && sx >= 0 && sx < W) ? src[sx] : 0.0f;
                            }
                        }
                        row += kLanes;
                    }
                }
            }
        }
    }
}

// ---- microkernels ----

#if defined(__AVX512F__)

// acc[i][j] (16x16) = sum_k A[k][i] * B[k][j]; A, B are K-major panels.
// Result written through `emit(i, __m512 row)` for i in [0, rows).
template <typename Emit>
inline void mm16x16(const float* A, const float* B, int K, int rows, Emit&& emit) {
    __m512 acc[kLanes];
    for (int i = 0; i < kLanes; ++i) acc[i] = _mm512_setzero_ps();
    for (int k = 0; k < K; ++k, A += kLanes, B += kLanes) {
        __m512 b = _mm512_loadu_ps(B);
        acc[0] = _mm512_fmadd_ps(_mm512_set1_ps(A[0]), b, acc[0]);
        acc[1] = _mm512_fmadd_ps(_mm512_set1_ps(A[1]), b, acc[1]);
        acc[2] = _mm512_fmadd_ps(_mm512_set1_ps(A[2]), b, acc[2]);
        acc[3] = _mm512_fmadd_ps(_mm512_set1_ps(A[3]), b, acc[3]);
        acc[4] = _mm512_fmadd_ps(_mm512_set1_ps(A[4]), b, acc[4]);
        acc[5] = _mm512_fmadd_ps(_mm512_set1_ps(A[5]), b, acc[5]);
        acc[6] = _mm512_fmadd_ps(_mm512_set1_ps(A[6]), b, acc[6]);
        acc[7] = _mm512_fmadd_ps(_mm512_set1_ps(A[7]), b, acc[7]);
        acc[8] = _mm512_fmadd_ps(_mm512_set1_ps(A[8]), b, acc[8]);
        acc[9] = _mm512_fmadd_ps(_mm512_set1_ps(A[9]), b, acc[9]);
        acc[10] = _mm512_fmadd_ps(_mm512_set1_ps(A[10]), b, acc[10]);
        acc[11] = _mm512_fmadd_ps(_mm512_set1_ps(A[11]), b, acc[11]);
        acc[12] = _mm512_fmadd_ps(_mm512_set1_ps(A[12]), b, acc[12]);
        acc[13] = _mm512_fmadd_ps(_mm512_set1_ps(A[13]), b, acc[13]);
        acc[14] = _mm512_fmadd_ps(_mm512_set1_ps(A[14]), b, acc[14]);
        acc[15] = _mm512_fmadd_ps(_mm512_set1_ps(A[15]), b, acc[15]);
    }
    for (int i = 0; i < rows; ++i) emit(i, acc[i]);
}

#else

struct Vec16 {
    float v[kLanes];
};

template <typename Emit>
inline void mm16x16(const float* A, const float* B, int K, int rows, Emit&& emit) {
    float acc[kLanes][kLanes] = {};
    for (int k = 0; k < K; ++k, A += kLanes, B += kLanes)
        for (int i = 0; i < kLanes; ++i)
            for (int j = 0; j < kLanes; ++j) acc[i][j] += A[i] * B[j];
    for (int i = 0; i < rows; ++i) {
        Vec16 row;
        for (int j = 0; j < kLanes; ++j) row.v[j] = acc[i][j];
        emit(i, row);
    }
}

#endif

// ---- forward: one output row of one sample ----

struct ConvShape {
    int H = 0, W = 0;   // spatial dims (input == output, same padding)
    int k = 3;          // 1 or 3
    int K = 0;          // total in_channels * k * k
};

inline void conv_row_forward(const float* const* groups, const int* gch, int ngroups,
                             const ConvShape& cs, int y, const PackedWeights& pw,
                             const float* bias, bool fuse_relu, float* out, float* panel_scratch) {
    std::size_t hw = static_cast<std::size_t>(cs.H) * cs.W;
    for (int x0 = 0; x0 < cs.W; x0 += kLanes) {
        int lanes = cs.W - x0 < kLanes ? cs.W - x0 : kLanes;
        build_panel(groups, gch, ngroups, cs.H, cs.W, y, x0, cs.k, panel_scratch);
        for (int b = 0; b < pw.blocks; ++b) {
            int rows = pw.oc - b * kLanes < kLanes ? pw.oc - b * kLanes : kLanes;
            float* out_base = out + static_cast<std::size_t>(b) * kLanes * hw +
                              static_cast<std::size_t>(y) * cs.W + x0;
#if defined(__AVX512F__)
            __mmask16 mask = static_cast<__mmask16>((1u << lanes) - 1u);
            mm16x16(pw.block(b), panel_scratch, cs.K, rows, [&](int i, __m512 acc) {
                acc = _mm512_add_ps(acc, _mm512_set1_ps(bias[b * kLanes + i]));
                if (fuse_relu) acc = _mm512_max_ps(acc, _mm512_setzero_ps());
                _mm512_mask_storeu_ps(out_base + static_cast<std::size_t>(i) * hw, mask, acc);
            });
#else
            mm16x16(pw.block(b), panel_scratch, cs.K, rows, [&](int i, const Vec16& acc) {
                float* dst = out_base + static_cast<std::size_t>(i) * hw;
                float bv = bias[b * kLanes + i];
                for (int j = 0; j < lanes; ++j) {
                    float v = acc.v[j] + bv;
                    dst[j] = fuse_relu && v < 0.0f ? 0.0f : v;
                }
            });
#endif
        }
    }
}

// ---- backward (whole sample; caller owns one sample per thread) ----

// One pass per (row, panel) computes both halves of the backward problem so
// the im2col panel and the dout tile are touched once:
//   dcols[k][j] = sum_oc w[oc][k] * dout[oc][pixel j]   (scattered into dx)
//   dwT(b)[k][i] += sum_j panel[k][j] * dout[(b*16+i)][pixel j]
// Accumulator chains are split four ways; a single chain serializes on FMA
// latency and runs several times slower.
inline void conv_sample_backward(const float* const* groups, const int* gch, int ngroups,
                                 const float* dout, const PackedWeights& pw, const ConvShape& cs,
                                 float* const* dgroups, const bool* group_needs, bool any_x,
                                 bool need_w, float* dwT, float* dbias, float* panel_scratch,
                                 float* dcols_scratch) {
    std::size_t hw = static_cast<std::size_t>(cs.H) * cs.W;
    int oc = pw.oc;
    for (int y = 0; y < cs.H; ++y) {
        for (int x0 = 0; x0 < cs.W; x0 += kLanes) {
            int lanes = cs.W - x0 < kLanes ? cs.W - x0 : kLanes;
            if (need_w) build_panel(groups, gch, ngroups, cs.H, cs.W, y, x0, cs.k, panel_scratch);

            for (int b = 0; b < pw.blocks; ++b) {
                int rows = oc - b * kLanes < kLanes ? oc - b * kLanes : kLanes;
#if defined(__AVX512F__)
                __mmask16 mask = static_cast<__mmask16>((1u << lanes) - 1u);
                __m512 d[kLanes];
                for (int i = 0; i < kLanes; ++i) {
                    d[i] = i < rows
                               ? _mm512_maskz_loadu_ps(
                                     mask, dout + static_cast<std::size_t>(b * kLanes + i) * hw +
                                               static_cast<std::size_t>(y) * cs.W + x0)
                               : _mm512_setzero_ps();
                }
                if (any_x) {
                    const float* a = pw.block(b);
                    for (int k = 0; k < cs.K; ++k) {
                        const float* ak = a + static_cast<std::size_t>(k) * kLanes;
                        __m512 a0 = _mm512_mul_ps(_mm512_set1_ps(ak[0]), d[0]);
                        __m512 a1 = _mm512_mul_ps(_mm512_set1_ps(ak[1]), d[1]);
                        __m512 a2 = _mm512_mul_ps(_mm512_set1_ps(ak[2]), d[2]);
                        __m512 a3 = _mm512_mul_ps(_mm512_set1_ps(ak[3]), d[3]);
                        for (int i = 4; i < kLanes; i += 4) {
                            a0 = _mm512_fmadd_ps(_mm512_set1_ps(ak[i]), d[i], a0);
                            a1 = _mm512_fmadd_ps(_mm512_set1_ps(ak[i + 1]), d[i + 1], a1);
                            a2 = _mm512_fmadd_ps(_mm512_set1_ps(ak[i + 2]), d[i + 2], a2);
                            a3 = _mm512_fmadd_ps(_mm512_set1_ps(ak[i + 3]), d[i + 3], a3);
                        }
                        __m512 acc = _mm512_add_ps(_mm512_add_ps(a0, a1), _mm512_add_ps(a2, a3));
                        float* dst = dcols_scratch + static_cast<std::size_t>(k) * kLanes;
                        if (b == 0)
                            _mm512_storeu_ps(dst, acc);
                        else
                            _mm512_storeu_ps(dst, _mm512_add_ps(acc, _mm512_loadu_ps(dst)));
                    }
                }
                if (need_w) {
                    // transpose the dout tile once per block
                    alignas(64) float doutT[kLanes][kLanes];
                    for (int i = 0; i < kLanes; ++i) {
                        alignas(64) float tmp[kLanes];
                        _mm512_store_ps(tmp, d[i]);
                        for (int j = 0; j < kLanes; ++j) doutT[j][i] = tmp[j];
                    }
                    float* acc_base = dwT + static_cast<std::size_t>(b) * cs.K * kLanes;
                    for (int k = 0; k < cs.K; ++k) {
                        const float* pk = panel_scratch + static_cast<std::size_t>(k) * kLanes;
                        float* accp = acc_base + static_cast<std::size_t>(k) * kLanes;
                        __m512 a0 = _mm512_loadu_ps(accp);
                        __m512 a1 = _mm512_mul_ps(_mm512_set1_ps(pk[1]), _mm512_load_ps(doutT[1]));
                        __m512 a2 = _mm512_mul_ps(_mm512_set1_ps(pk[2]), _mm512_load_ps(doutT[2]));
                        __m512 a3 = _mm512_mul_ps(_mm512_set1_ps(pk[3]), _mm512_load_ps(doutT[3]));
                        a0 = _mm512_fmadd_ps(_mm512_set1_ps(pk[0]), _mm512_load_ps(doutT[0]), a0);
                        for (int j = 4; j < kLanes; j += 4) {
                            a0 = _mm512_fmadd_ps(_mm512_set1_ps(pk[j]), _mm512_load_ps(doutT[j]), a0);
                            a1 = _mm512_fmadd_ps(_mm512_set1_ps(pk[j + 1]),
                                                 _mm512_load_ps(doutT[j + 1]), a1);
                            a2 = _mm512_fmadd_ps(_mm512_set1_ps(pk[j + 2]),
                                                 _mm512_load_ps(doutT[j + 2]), a2);
                            a3 = _mm512_fmadd_ps(_mm512_set1_ps(pk[j + 3]),
                                                 _mm512_load_ps(doutT[j + 3]), a3);
                        }
                        _mm512_storeu_ps(
                            accp, _mm512_add_ps(_mm512_add_ps(a0, a1), _mm512_add_ps(a2, a3)));
                    }
                }
#else
                float d[kLanes][kLanes];
                for (int i = 0; i < kLanes; ++i)
                    for (int j = 0; j < kLanes; ++j)
                        d[i][j] = (i < rows && j < lanes)
                                      ? dout[static_cast<std::size_t>(b * kLanes + i) * hw +
                                             static_cast<std::size_t>(y) * cs.W + x0 + j]
                                      : 0.0f;
                if (any_x) {
                    const float* a = pw.block(b);
                    for (int k = 0; k < cs.K; ++k) {
                        const float* ak = a + static_cast<std::size_t>(k) * kLanes;
                        float* dst = dcols_scratch + static_cast<std::size_t>(k) * kLanes;
                        for (int j = 0; j < kLanes; ++j) {
                            float acc = 0.0f;
                            for (int i = 0; i < kLanes; ++i) acc += ak[i] * d[i][j];
                            dst[j] = b == 0 ? acc : dst[j] + acc;
                        }
                    }
                }
                if (need_w) {
                    float* acc_base = dwT + static_cast<std::size_t>(b) * cs.K * kLanes;
                    for (int k = 0; k < cs.K; ++k) {
                        const float* pk = panel_scratch + static_cast<std::size_t>(k) * kLanes;
                        float* accp = acc_base + static_cast<std::size_t>(k) * kLanes;
                        for (int j = 0; j < kLanes; ++j)
                            for (int i = 0; i < kLanes; ++i) accp[i] += pk[j] * d[i][j];
                    }
                }
#endif
            }

            if (dbias) {
                for (int o = 0; o < oc; ++o) {
                    const float* src = dout + static_cast<std::size_t>(o) * hw +
                                       static_cast<std::size_t>(y) * cs.W + x0;
                    float s = 0.0f;
                    for (int j = 0; j < lanes; ++j) s += src[j];
                    dbias[o] += s;
                }
            }

            if (!any_x) continue;
            // scatter-add dcols into the per-group input gradients
            const float* row = dcols_scratch;
            for (int g = 0; g < ngroups; ++g) {
                if (!group_needs[g]) {
                    row += static_cast<std::size_t>(gch[g]) * cs.k * cs.k * kLanes;
                    continue;
                }
                for (int c = 0; c < gch[g]; ++c) {
                    float* plane = dgroups[g] + static_cast<std::size_t>(c) * hw;
                    if (cs.k == 1) {
                        float* dst = plane + static_cast<std::size_t>(y) * cs.W + x0;
                        for (int j = 0; j < lanes; ++j) dst[j] += row[j];
                        row += kLanes;
                    } else {
                        for (int dy = -1; dy <= 1; ++dy) {
                            int sy = y + dy;
                            if (sy < 0 || sy >= cs.H) {
                                row += 3 * kLanes;
                                continue;
                            }
                            float* dst = plane + static_cast<std::size_t>(sy) * cs.W;
                            for (int dx = -1; dx <= 1; ++dx) {
                                int sx0 = x0 + dx;
                                if (lanes == kLanes && sx0 >= 0 && sx0 + kLanes <= cs.W) {
                                    for (int j = 0; j < kLanes; ++j) dst[sx0 + j] += row[j];
                                } else {
                                    for (int j = 0; j < lanes; ++j) {
                                        int sx = sx0 + j;
                                        if (sx >= 0 && sx < cs.W) dst[sx] += row[j];
                                    }
                                }
                                row += kLanes;
                            }
                        }
                    }
                }
            }
        }
    }
}

// fold a packed dwT accumulator into a standard (oc, K) weight gradient
inline void fold_dwT(const float* dwT, int oc, int K, float* dw) {
    for (int o = 0; o < oc; ++o) {
        int b = o / kLanes, lane = o % kLanes;
        const float* src = dwT + (static_cast<std::size_t>(b) * K) * kLanes + lane;
        float* dst = dw + static_cast<std::size_t>(o) * K;
        for (int k = 0; k < K; ++k) dst[k] += src[static_cast<std::size_t>(k) * kLanes];
    }
}

}  // namespace miot::nn::kern
