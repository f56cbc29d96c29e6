#pragma once

#include <fstream>
#include <iostream>
#include <optional>

#include "madf/checkpoint.hpp"
#include "madf/losses.hpp"
#include "madf/metrics.hpp"

namespace madf {

// Parsed from plain `key = value` config files; unknown keys are
// rejected.
struct TrainConfig {
    std::string preset = "desk";
    int batch = 4;
    int iterations = 2000;
    std::uint64_t seed = 1;
    std::string schedule = "coarse-to-fine";
    bool pn_enabled = true;
    int refinements = 2;
    int image_size = 64;
    int dataset_size = 16;
    int eval_interval = 500;
    int checkpoint_interval = 500;
    int eval_masks = 8;
    std::string checkpoint_path = "madf_checkpoint.bin";
    std::string log_path = "madf_train.log";
    std::string resume_from;

    void validate() const {
        if (batch < 1) throw ConfigError("TrainConfig: batch must be >= 1");
        if (iterations < 1) throw ConfigError("TrainConfig: iterations must be >= 1");
        if (dataset_size < 1) throw ConfigError("TrainConfig: dataset_size must be >= 1");
        if (image_size < 16) throw ConfigError("TrainConfig: image_size must be >= 16");
        if (eval_interval < 1 || checkpoint_interval < 1)
            throw ConfigError("TrainConfig: intervals must be >= 1");
        schedule_from_string(schedule);
    }

    ModelConfig model_config() const {
        ModelConfig mc = ModelConfig::by_name(preset);
        mc.refinements = refinements;
        mc.pn_enabled = pn_enabled;
        mc.validate();
        mc.validate_input(image_size, image_size);
        return mc;
    }
};

TrainConfig parse_train_config(const std::string& path);

template <typename T>
Tensor4<T> image_batch_tensor(const std::vector<const ImageSample*>& images) {
    if (images.empty()) throw ConfigError("image_batch_tensor: empty batch");
    const int c = images[0]->c, h = images[0]->h, w = images[0]->w;
    Tensor4<T> out(static_cast<int>(images.size()), c, h, w);
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i]->c != c || images[i]->h != h || images[i]->w != w)
            throw ConfigError("image_batch_tensor: inconsistent dims");
        T* dst = out.item(static_cast<int>(i));
        for (std::size_t j = 0; j < images[i]->px.size(); ++j)
            dst[j] = static_cast<T>(images[i]->px[j]);
    }
    return out;
}

template <typename T>
Tensor4<T> mask_batch_tensor(const std::vector<const Mask*>& masks) {
    if (masks.empty()) throw ConfigError("mask_batch_tensor: empty batch");
    const int h = masks[0]->h, w = masks[0]->w;
    Tensor4<T> out(static_cast<int>(masks.size()), 1, h, w);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        T* dst = out.item(static_cast<int>(i));
        for (std::size_t j = 0; j < masks[i]->m.size(); ++j)
            dst[j] = static_cast<T>(masks[i]->m[j]);
    }
    return out;
}

template <typename T>
ImageSample image_from_tensor(const Tensor4<T>& t, int item) {
    ImageSample img(t.c, t.h, t.w);
    const T* src = t.item(item);
    for (std::size_t j = 0; j < img.px.size(); ++j) img.px[j] = static_cast<double>(src[j]);
    return img;
}

// Zero-fills hole pixels; the network input convention.
inline ImageSample apply_mask(const ImageSample& img, const Mask& mask) {
    ImageSample out = img;
    for (int ci = 0; ci < img.c; ++ci)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                if (mask.at(y, x) == 0) out.at(ci, y, x) = 0.0;
    return out;
}

// Adapter: runs the model on one sample and returns the raw output of
// the requested decoder (default: last).
template <typename T>
ForwardFn model_forward_fn(Model<T>& model, int decoder = -1) {
    return [&model, decoder](const ImageSample& img, const Mask& mask) {
        Graph<T> g;
        const ImageSample masked = apply_mask(img, mask);
        Var<T> input = g.constant(image_batch_tensor<T>({&masked}), "input");
        Var<T> mask_leaf = g.constant(mask_batch_tensor<T>({&mask}), "mask");
        DecoderOutputs<T> out = model.forward_full(g, input, mask_leaf, false);
        const int d = decoder < 0 ? static_cast<int>(out.images.size()) - 1 : decoder;
        return image_from_tensor(out.images[d]->value, 0);
    };
}

// Desk-scale training driver: seeded synthetic images, freshly drawn
// augmented freeform masks each iteration, incremental supervision and
// Adam. Fully deterministic per (seed, config); the RNG cursor is
// persisted in checkpoints so resumed runs continue bit-exactly.
template <typename T>
class Trainer {
public:
    explicit Trainer(TrainConfig cfg)
        : cfg_(std::move(cfg)),
          model_(cfg_.model_config(), Rng::mix(cfg_.seed, 0x0DE1)),
          adam_(model_.params()),
          net_(FeatureNet<T>::kDefaultSeed),
          train_rng_(Rng::mix(cfg_.seed, 0x57E9)) {
        cfg_.validate();
        for (int i = 0; i < cfg_.dataset_size; ++i)
            dataset_.push_back(gen_synthetic_image(cfg_.image_size, cfg_.image_size,
                                                   Rng::mix(cfg_.seed, 0xDA7A) + i));
        for (int i = 0; i < cfg_.eval_masks; ++i) {
            MaskSpec spec;
            spec.bucket = i % kBucketCount;
            spec.seed = Rng::mix(cfg_.seed, 0xE7A1) + i;
            eval_masks_.push_back(
                gen_freeform_mask(cfg_.image_size, cfg_.image_size, spec));
        }
        if (!cfg_.resume_from.empty()) {
            const CheckpointMeta meta = load_checkpoint(cfg_.resume_from, model_, &adam_);
            iteration_ = meta.iteration;
            train_rng_.set_state(meta.rng_state);
        }
    }

    // One optimization step; returns the loss report for logging.
    LossReport step() {
        ++iteration_;
        std::vector<const ImageSample*> gt_ptrs;
        std::vector<Mask> masks;
        std::vector<ImageSample> masked;
        for (int b = 0; b < cfg_.batch; ++b) {
            const int idx = train_rng_.uniform_int(0, cfg_.dataset_size - 1);
            MaskSpec spec;
            spec.bucket = train_rng_.uniform_int(0, kBucketCount - 1);
            spec.seed = train_rng_.next_u64();
            Mask mask = gen_freeform_mask(cfg_.image_size, cfg_.image_size, spec);
            mask = augment_mask(mask, train_rng_.next_u64());
            gt_ptrs.push_back(&dataset_[idx]);
            masked.push_back(apply_mask(dataset_[idx], mask));
            masks.push_back(std::move(mask));
        }
        std::vector<const ImageSample*> masked_ptrs;
        std::vector<const Mask*> mask_ptrs;
        for (auto& m : masked) masked_ptrs.push_back(&m);
        for (auto& m : masks) mask_ptrs.push_back(&m);

        Graph<T> g;
        Var<T> input = g.constant(image_batch_tensor<T>(masked_ptrs), "input");
        Var<T> mask_leaf = g.constant(mask_batch_tensor<T>(mask_ptrs), "mask");
        Var<T> gt = g.constant(image_batch_tensor<T>(gt_ptrs), "gt");

        DecoderOutputs<T> out = model_.forward_full(g, input, mask_leaf, true);
        SupervisionResult<T> sup =
            supervision_losses(g, out.images, gt, mask_leaf, masks, net_, LossWeights{},
                               schedule_from_string(cfg_.schedule));
        if (!std::isfinite(sup.report.total))
            throw NumericError("training halted: non-finite loss at iteration " +
                               std::to_string(iteration_));
        model_.params().zero_grad();
        g.backward(sup.total);
        adam_.step(model_.params());
        return sup.report;
    }

    // Runs to the configured iteration count. Returns false when halted
    // on a numeric error (the last periodic checkpoint stays on disk).
    bool run(std::ostream* echo = nullptr) {
        std::ofstream log(cfg_.log_path, std::ios::app);
        if (!log) throw IoError(cfg_.log_path + ": cannot open log for writing");
        auto emit = [&](const std::string& line) {
            log << line << "\n";
            log.flush();
            if (echo) *echo << line << "\n";
        };
        while (iteration_ < static_cast<std::uint64_t>(cfg_.iterations)) {
            LossReport report;
            try {
                report = step();
            } catch (const NumericError& e) {
                emit(std::string("halt=1 reason=") + e.what());
                return false;
            }
            emit("iter=" + std::to_string(iteration_) + " " + report.log_fields());
            if (iteration_ % static_cast<std::uint64_t>(cfg_.eval_interval) == 0) {
                const auto rows = evaluate();
                for (const auto& r : rows)
                    emit("eval iter=" + std::to_string(iteration_) + " bucket=" +
                         (r.bucket == -1 ? std::string("ALL") : bucket_label(r.bucket)) +
                         " psnr=" + std::to_string(r.psnr_db) +
                         " ssim=" + std::to_string(r.ssim) +
                         " count=" + std::to_string(r.count));
            }
            if (iteration_ % static_cast<std::uint64_t>(cfg_.checkpoint_interval) == 0 ||
                iteration_ == static_cast<std::uint64_t>(cfg_.iterations))
                save(cfg_.checkpoint_path);
        }
        return true;
    }

    // Held-out-mask metrics over the training images.
    std::vector<EvalRow> evaluate() {
        std::vector<ImageSample> samples;
        std::vector<Mask> masks;
        for (std::size_t i = 0; i < eval_masks_.size(); ++i) {
            samples.push_back(dataset_[i % dataset_.size()]);
            masks.push_back(eval_masks_[i]);
        }
        return evaluate_set(model_forward_fn(model_), samples, masks);
    }

    // Mean hole-region PSNR of each decoder's composed output over the
    // held-out masks.
    std::vector<double> hole_psnr_by_decoder() {
        std::vector<double> sums(model_.config().refinements + 1, 0.0);
        for (std::size_t i = 0; i < eval_masks_.size(); ++i) {
            const ImageSample& gt = dataset_[i % dataset_.size()];
            const Mask& mask = eval_masks_[i];
            const ImageSample masked = apply_mask(gt, mask);
            Graph<T> g;
            Var<T> input = g.constant(image_batch_tensor<T>({&masked}), "input");
            Var<T> mask_leaf = g.constant(mask_batch_tensor<T>({&mask}), "mask");
            DecoderOutputs<T> out = model_.forward_full(g, input, mask_leaf, false);
            for (std::size_t d = 0; d < out.images.size(); ++d) {
                const ImageSample pred = image_from_tensor(out.images[d]->value, 0);
                const ImageSample composed = clamp01(compose_image(pred, gt, mask));
                sums[d] += psnr_hole(composed, gt, mask);
            }
        }
        for (auto& v : sums) v /= static_cast<double>(eval_masks_.size());
        return sums;
    }

    void save(const std::string& path) const {
        CheckpointMeta meta;
        meta.iteration = iteration_;
        meta.rng_state = train_rng_.state();
        meta.adam_t = adam_.t();
        save_checkpoint(path, model_, &adam_, meta);
    }

    Model<T>& model() { return model_; }
    Adam<T>& adam() { return adam_; }
    const TrainConfig& config() const { return cfg_; }
    std::uint64_t iteration() const { return iteration_; }
    const std::vector<ImageSample>& dataset() const { return dataset_; }
    const std::vector<Mask>& eval_masks() const { return eval_masks_; }

private:
    TrainConfig cfg_;
    Model<T> model_;
    Adam<T> adam_;
    FeatureNet<T> net_;
    Rng train_rng_;
    std::uint64_t iteration_ = 0;
    std::vector<ImageSample> dataset_;
    std::vector<Mask> eval_masks_;
};

}  // namespace madf
