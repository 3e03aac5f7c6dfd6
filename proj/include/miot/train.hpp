#pragma once

// Training for both pipeline variants: degraded/clean patch sampling through
// the real codec, a bounded single-producer prefetch queue, and the Adam
// loop. Everything is deterministic given the plan seed; batch construction
// for step s depends only on (seed, s).

#include <condition_variable>
#include <cstdio>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "miot/codec.hpp"
#include "miot/rdn.hpp"
#include "miot/resample.hpp"

namespace miot {

struct TrainPlan {
    int steps = 500;
    int batch = 16;
    int patch = 96;  // target-resolution patch edge, multiple of scale
    std::vector<int> quality_set;  // defaults depend on variant
    int variant = 1;               // 1: same-size denoise; 2: x4 down-scaled input
    std::uint64_t seed = 0;
    float lr = 1e-4f;
    bool l2 = false;  // mean-squared loss instead of mean-absolute
    int log_every = 25;
};

inline std::vector<int> default_quality_set(int variant) {
    return variant == 1 ? std::vector<int>{1, 5, 10, 15, 20, 25}
                        : std::vector<int>{10, 20, 30, 40, 50, 60};
}

inline void validate(const TrainPlan& plan, int scale) {
    require(plan.variant == 1 || plan.variant == 2, "variant must be 1 or 2");
    require(!plan.quality_set.empty(), "quality set must not be empty");
    require(plan.patch % scale == 0, "patch size must be a multiple of the scale");
    require(plan.steps > 0 && plan.batch > 0, "steps and batch must be positive");
}

struct RestorationSample {
    ImageU8 input;   // decoded degraded patch (variant 2: still at low resolution)
    ImageU8 target;  // clean patch
    int image_index = 0;
    int quality = 0;
};

// One training pair: crop a patch, push it through the codec (after x4
// down-scaling for variant 2) with a quality drawn from the plan's set.
inline RestorationSample make_training_pair(const ImageU8& src, const TrainPlan& plan, Rng& rng) {
    require(src.width >= plan.patch && src.height >= plan.patch,
            "source image smaller than the requested patch");
    int x0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(src.width - plan.patch + 1)));
    int y0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(src.height - plan.patch + 1)));
    RestorationSample s;
    s.target = crop(src, x0, y0, plan.patch, plan.patch);
    s.quality = plan.quality_set[rng.below(static_cast<std::uint32_t>(plan.quality_set.size()))];
    // 4:4:4 here: at q=100 the degradation must stay near-lossless so the
    // clean/degraded pair is anchored by the codec bound, not by chroma blur
    codec::EncodeOptions opt;
    opt.subsample = false;
    if (plan.variant == 1) {
        s.input = codec::decode(codec::encode(s.target, s.quality, opt));
    } else {
        opt.scale_factor = 4;
        s.input = codec::decode(codec::encode(downscale(s.target, 4), s.quality, opt));
    }
    return s;
}

// Hold-out convention: the last 10% of the dataset (by the caller's order,
// normally filename order) is never sampled during training.
inline std::size_t train_partition(std::size_t dataset_size) {
    std::size_t holdout = dataset_size / 10;
    return dataset_size - holdout;
}

namespace detail {

struct Batch {
    nn::Tensor input;   // (B,3,h,w), unit floats
    nn::Tensor target;  // (B,3,patch,patch)
    std::vector<int> image_indices;
};

inline Batch build_batch(const std::vector<ImageU8>& dataset, std::size_t train_count,
                         const TrainPlan& plan, int scale, int step) {
    Rng rng(plan.seed * 0x9E3779B97F4A7C15ull + 0x2545F4914F6CDD1Dull * (step + 1));
    int in_edge = plan.patch / scale;
    Batch b;
    b.input = nn::Tensor::zeros({plan.batch, 3, in_edge, in_edge});
    b.target = nn::Tensor::zeros({plan.batch, 3, plan.patch, plan.patch});
    std::size_t in_plane = static_cast<std::size_t>(in_edge) * in_edge;
    std::size_t tgt_plane = static_cast<std::size_t>(plan.patch) * plan.patch;
    for (int i = 0; i < plan.batch; ++i) {
        int idx = static_cast<int>(rng.below(static_cast<std::uint32_t>(train_count)));
        RestorationSample s = make_training_pair(dataset[static_cast<std::size_t>(idx)], plan, rng);
        b.image_indices.push_back(idx);
        for (int c = 0; c < 3; ++c) {
            float* din = b.input.data() + (static_cast<std::size_t>(i) * 3 + c) * in_plane;
            float* dtg = b.target.data() + (static_cast<std::size_t>(i) * 3 + c) * tgt_plane;
            for (std::size_t k = 0; k < in_plane; ++k)
                din[k] = static_cast<float>(s.input.planes[c][k]) * (1.0f / 255.0f);
            for (std::size_t k = 0; k < tgt_plane; ++k)
                dtg[k] = static_cast<float>(s.target.planes[c][k]) * (1.0f / 255.0f);
        }
    }
    return b;
}

// Single-producer bounded queue so codec work for step s+1 overlaps the
// optimizer work for step s. Batches are keyed by step, so threading cannot
// change what the model sees.
class BatchPipeline {
  public:
    BatchPipeline(const std::vector<ImageU8>& dataset, std::size_t train_count,
                  const TrainPlan& plan, int scale)
        : producer_([this, &dataset, train_count, plan, scale] {
              for (int step = 0; step < plan.steps; ++step) {
                  Batch b = build_batch(dataset, train_count, plan, scale, step);
                  std::unique_lock lock(mu_);
                  not_full_.wait(lock, [this] { return queue_.size() < 2 || stopped_; });
                  if (stopped_) return;
                  queue_.push_back(std::move(b));
                  not_empty_.notify_one();
              }
          }) {}

    Batch pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [this] { return !queue_.empty(); });
        Batch b = std::move(queue_.front());
        queue_.erase(queue_.begin());
        not_full_.notify_one();
        return b;
    }

    ~BatchPipeline() {
        {
            std::lock_guard lock(mu_);
            stopped_ = true;
        }
        not_full_.notify_all();
        producer_.join();
    }

  private:
    std::mutex mu_;
    std::condition_variable not_empty_, not_full_;
    std::vector<Batch> queue_;
    bool stopped_ = false;
    std::thread producer_;
};

}  // namespace detail

struct TrainResult {
    RdnParams params;
    std::vector<float> loss_trace;  // one entry per step, image-space loss
};

using ProgressFn = std::function<void(int step, float loss)>;

inline TrainResult train(const RdnConfig& cfg, const TrainPlan& plan_in,
                         const std::vector<ImageU8>& dataset, const ProgressFn& progress = {}) {
    validate(cfg);
    TrainPlan plan = plan_in;
    if (plan.quality_set.empty()) plan.quality_set = default_quality_set(plan.variant);
    validate(plan, cfg.scale);
    require(!dataset.empty(), "training dataset is empty");
    require((plan.variant == 2) == (cfg.scale == 4), "variant and model scale must agree");

    std::size_t train_count = train_partition(dataset.size());
    require(train_count > 0, "dataset too small for a train split");

    TrainResult result;
    result.params = init_params(cfg, plan.seed);
    std::vector<nn::Tensor> params = result.params.all();
    nn::AdamState adam(params, plan.lr);

    detail::BatchPipeline pipeline(dataset, train_count, plan, cfg.scale);
    for (int step = 0; step < plan.steps; ++step) {
        detail::Batch batch = pipeline.pop();
        nn::zero_grads(params);

        nn::Tensor out = rdn_forward(result.params, batch.input);
        if (cfg.predict_residual) out = nn::add(out, upscale_tensor(batch.input, cfg.scale));
        nn::Tensor loss =
            plan.l2 ? nn::l2_loss(out, batch.target) : nn::l1_loss(out, batch.target);

        float loss_value = loss.data()[0];
        if (!std::isfinite(loss_value)) {
            std::string ids;
            for (int idx : batch.image_indices) ids += std::to_string(idx) + " ";
            throw error("non-finite loss at step " + std::to_string(step) +
                        " (lr " + std::to_string(plan.lr) + ", batch images: " + ids + ")");
        }

        nn::backward(loss);
        nn::adam_step(params, adam);
        result.loss_trace.push_back(loss_value);
        if (progress && (step % plan.log_every == 0 || step + 1 == plan.steps))
            progress(step, loss_value);
    }
    return result;
}

}  // namespace miot
