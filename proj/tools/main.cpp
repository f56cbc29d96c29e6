// Command-line front end: training, inference, evaluation, mask
// generation, complexity accounting and gradient verification.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "madf/flops.hpp"
#include "madf/gradcheck.hpp"
#include "madf/kernel_dump.hpp"
#include "madf/train.hpp"

namespace {

using madf::Mask;

struct InferArgs {
    std::string ckpt, image, mask, out;
    bool emit_intermediate = false;
};

// Rebuilds the model structure from the checkpoint's config echo, then
// loads the weights.
template <typename T>
madf::Model<T> model_from_checkpoint(const std::string& path) {
    const auto records = madf::read_records(path);
    std::vector<std::int64_t> echo;
    for (const auto& r : records)
        if (r.name == "meta.config") {
            echo.resize(r.element_count());
            std::memcpy(echo.data(), r.payload.data(), r.payload.size());
        }
    if (echo.size() < 9) throw madf::CheckpointError(path + ": missing config echo");
    madf::ModelConfig cfg;
    cfg.levels = static_cast<int>(echo[0]);
    cfg.refinements = static_cast<int>(echo[1]);
    cfg.pn_enabled = echo[2] != 0;
    cfg.input_channels = static_cast<int>(echo[3]);
    cfg.mask_channels = static_cast<int>(echo[4]);
    cfg.base_width = static_cast<int>(echo[5]);
    cfg.max_width = static_cast<int>(echo[6]);
    cfg.pn_latent = static_cast<int>(echo[7]);
    if (echo.size() != 8 + 2 * static_cast<std::size_t>(cfg.levels))
        throw madf::CheckpointError(path + ": malformed config echo");
    for (int l = 0; l < cfg.levels; ++l)
        cfg.kernel_ladder.push_back(static_cast<int>(echo[8 + l]));
    for (int l = 0; l < cfg.levels; ++l)
        cfg.image_channels.push_back(static_cast<int>(echo[8 + cfg.levels + l]));
    cfg.name = "checkpoint";
    madf::Model<T> model(cfg, 0);
    madf::load_checkpoint(path, model, static_cast<madf::Adam<T>*>(nullptr));
    return model;
}

int cmd_train(const std::string& config_path) {
    const madf::TrainConfig cfg = madf::parse_train_config(config_path);
    madf::Trainer<float> trainer(cfg);
    std::cout << "training " << cfg.preset << " preset: " << cfg.iterations
              << " iterations, batch " << cfg.batch << ", schedule " << cfg.schedule << "\n";
    const bool ok = trainer.run(&std::cout);
    if (!ok) {
        std::cerr << "training halted on non-finite loss; last periodic checkpoint kept\n";
        return 1;
    }
    std::cout << "checkpoint written to " << cfg.checkpoint_path << "\n";
    return 0;
}

int cmd_infer(const InferArgs& args) {
    auto model = model_from_checkpoint<float>(args.ckpt);
    const madf::ImageSample image = madf::load_image(args.image);
    const Mask mask = madf::load_mask(args.mask);
    if (mask.h != image.h || mask.w != image.w)
        throw madf::ConfigError("mask dims do not match image");

    const madf::ImageSample masked = madf::apply_mask(image, mask);
    madf::Graph<float> g;
    auto input = g.constant(madf::image_batch_tensor<float>({&masked}), "input");
    auto mask_leaf = g.constant(madf::mask_batch_tensor<float>({&mask}), "mask");
    auto out = model.forward_full(g, input, mask_leaf, false);

    auto composed_of = [&](int d) {
        const madf::ImageSample pred = madf::image_from_tensor(out.images[d]->value, 0);
        return madf::clamp01(madf::compose_image(pred, image, mask));
    };
    const int last = static_cast<int>(out.images.size()) - 1;
    madf::save_image(composed_of(last), args.out);
    std::cout << "wrote " << args.out << "\n";
    if (args.emit_intermediate) {
        const std::filesystem::path base(args.out);
        for (int d = 0; d <= last; ++d) {
            std::filesystem::path p = base;
            p.replace_extension("");
            p += "_d" + std::to_string(d) + ".ppm";
            madf::save_image(composed_of(d), p.string());
            std::cout << "wrote " << p.string() << "\n";
        }
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, int count, std::uint64_t seed) {
    auto model = model_from_checkpoint<float>(ckpt);
    const int div = 1 << model.config().levels;
    const int size = std::max(64, div);
    std::vector<madf::ImageSample> samples;
    std::vector<Mask> masks;
    for (int i = 0; i < count; ++i) {
        samples.push_back(madf::gen_synthetic_image(size, size, madf::Rng::mix(seed, i)));
        madf::MaskSpec spec;
        spec.bucket = i % madf::kBucketCount;
        spec.seed = madf::Rng::mix(seed, 1000 + i);
        masks.push_back(madf::gen_freeform_mask(size, size, spec));
    }
    const auto rows = madf::evaluate_set(madf::model_forward_fn(model), samples, masks);
    std::cout << madf::eval_table(rows) << "\n" << madf::eval_csv(rows);
    return 0;
}

int cmd_gen_masks(const std::string& bucket_arg, int count, std::uint64_t seed,
                  const std::string& out_dir, int size) {
    std::filesystem::create_directories(out_dir);
    std::vector<int> buckets;
    if (bucket_arg == "all")
        for (int b = 0; b < madf::kBucketCount; ++b) buckets.push_back(b);
    else
        buckets.push_back(std::stoi(bucket_arg));
    for (const int b : buckets) {
        if (b < 0 || b >= madf::kBucketCount)
            throw madf::ConfigError("bucket must be 0..5 or 'all'");
        for (int i = 0; i < count; ++i) {
            madf::MaskSpec spec;
            spec.kind = madf::MaskKind::kFreeform;
            spec.bucket = b;
            spec.seed = madf::Rng::mix(seed, static_cast<std::uint64_t>(b) * 100000 + i);
            const Mask mask = madf::gen_freeform_mask(size, size, spec);
            const std::string path =
                out_dir + "/mask_b" + std::to_string(b) + "_" + std::to_string(i) + ".pgm";
            madf::save_mask(mask, path);
        }
    }
    std::cout << "wrote " << count << " mask(s) per bucket to " << out_dir << "\n";
    return 0;
}

int cmd_flops(const std::string& preset, const std::string& hw) {
    int h = 256, w = 256;
    if (!hw.empty()) {
        const auto comma = hw.find(',');
        if (comma == std::string::npos) throw madf::ConfigError("--hw expects H,W");
        h = std::stoi(hw.substr(0, comma));
        w = std::stoi(hw.substr(comma + 1));
    }
    const madf::ModelConfig cfg = madf::ModelConfig::by_name(preset);
    const madf::FlopsReport report = madf::count_flops(cfg, h, w);
    std::cout << "preset " << preset << " at " << h << "x" << w
              << " (multiplies per sample)\n\n"
              << report.table() << "\n"
              << report.key_values();
    return 0;
}

int cmd_gradcheck(const std::string& module) {
    const auto results = madf::run_gradcheck_suites(module);
    bool all_ok = true;
    for (const auto& r : results) {
        std::printf("%-22s max_rel_err=%.3e tol=%.0e %s\n", r.name.c_str(), r.max_rel_err,
                    r.tolerance, r.passed ? "ok" : "FAIL");
        all_ok = all_ok && r.passed;
    }
    return all_ok ? 0 : 1;
}

int cmd_dump_kernels(const std::string& ckpt, const std::string& mask_path,
                     const std::string& out) {
    auto model = model_from_checkpoint<float>(ckpt);
    const Mask mask = madf::load_mask(mask_path);
    const madf::KernelDump dump = madf::dump_first_layer_kernels(model, mask);
    madf::save_image(dump.grid, out);
    std::cout << "wrote " << out << "\n"
              << "kernel_energy.valid_window=" << dump.energy_valid << "\n"
              << "kernel_energy.masked_window=" << dump.energy_masked << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    madf::blas::pin_single_threaded();
    CLI::App app{"mask-aware dynamic filtering inpainting toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "run the training loop from a config file");
    train->add_option("--config", config_path, "key = value config file")->required();

    InferArgs infer;
    auto* inf = app.add_subcommand("infer", "inpaint one image with a trained checkpoint");
    inf->add_option("--ckpt", infer.ckpt)->required();
    inf->add_option("--image", infer.image, "damaged or ground-truth image (P6)")->required();
    inf->add_option("--mask", infer.mask, "validity mask (P5, 255 = valid)")->required();
    inf->add_option("--out", infer.out, "output path (P6)")->required();
    inf->add_flag("--emit-intermediate", infer.emit_intermediate,
                  "also write each decoder's output");

    std::string eval_ckpt;
    int eval_count = 24;
    std::uint64_t eval_seed = 7;
    auto* eval = app.add_subcommand("eval", "bucketed PSNR/SSIM on synthetic data");
    eval->add_option("--ckpt", eval_ckpt)->required();
    eval->add_option("--count", eval_count);
    eval->add_option("--seed", eval_seed);

    std::string gm_bucket = "all", gm_out = "masks";
    int gm_count = 10, gm_size = 64;
    std::uint64_t gm_seed = 7;
    auto* gm = app.add_subcommand("gen-masks", "write freeform masks as P5 files");
    gm->add_option("--bucket", gm_bucket, "bucket index 0..5 or 'all'");
    gm->add_option("--count", gm_count);
    gm->add_option("--seed", gm_seed);
    gm->add_option("--out", gm_out)->required();
    gm->add_option("--size", gm_size);

    std::string fl_preset = "full", fl_hw;
    auto* fl = app.add_subcommand("flops", "analytic multiply counts per component");
    fl->add_option("--preset", fl_preset, "desk or full");
    fl->add_option("--hw", fl_hw, "input size as H,W (default 256,256)");

    std::string gc_module = "all";
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc->add_option("--module", gc_module, "tensor, layers, losses, model or all");

    std::string dk_ckpt, dk_mask, dk_out;
    auto* dk = app.add_subcommand("dump-kernels",
                                  "render first-layer generated kernels for a mask");
    dk->add_option("--ckpt", dk_ckpt)->required();
    dk->add_option("--mask", dk_mask)->required();
    dk->add_option("--out", dk_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path);
        if (inf->parsed()) return cmd_infer(infer);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_count, eval_seed);
        if (gm->parsed()) return cmd_gen_masks(gm_bucket, gm_count, gm_seed, gm_out, gm_size);
        if (fl->parsed()) return cmd_flops(fl_preset, fl_hw);
        if (gc->parsed()) return cmd_gradcheck(gc_module);
        if (dk->parsed()) return cmd_dump_kernels(dk_ckpt, dk_mask, dk_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
