#include "spn/commands.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "spn/codec.hpp"
#include "spn/errors.hpp"
#include "spn/service.hpp"
#include "spn/version.hpp"
#include "spn/visualize.hpp"

namespace spn {

namespace {

std::vector<std::string> loss_columns(Mode mode) {
    if (mode == Mode::Probabilistic)
        return {"l_prior", "l_img", "l_adv", "l_adv_d", "l_feature", "l_diverse", "l_kl", "total"};
    return {"l_prior", "l_img", "l_adv", "l_adv_d", "total"};
}

// Short flags and the config keys they set.
const std::vector<std::pair<std::string, std::string>>& aliases() {
    static const std::vector<std::pair<std::string, std::string>> table{
        {"--iters", "train.iters"},  {"--mode", "prior.mode"},        {"--size", "data.size"},
        {"--seed", "run.seed"},      {"--ckpt-every", "train.ckpt_every"}, {"--k", "eval.k"},
        {"--port", "serve.port"},    {"--host", "serve.host"},        {"--synthetic", "data.synthetic"},
    };
    return table;
}

struct ConfigFlags {
    std::string config_file;
    std::string preset;
    std::map<std::string, std::string> keys;    // from --<key>
    std::map<std::string, std::string> aliased; // from short flags, keyed by config key
    std::map<std::string, CLI::Option*> key_options;
    std::map<std::string, CLI::Option*> alias_options;
};

void add_config_flags(CLI::App* app, ConfigFlags& flags) {
    app->add_option("--config", flags.config_file, "key = value config file");
    app->add_option("--preset", flags.preset, "base preset: desk or full (default)");
    for (const auto& spec : config_schema())
        flags.key_options[spec.key] = app->add_option("--" + spec.key, flags.keys[spec.key], spec.help);
    for (const auto& [flag, key] : aliases())
        flags.alias_options[key] = app->add_option(flag, flags.aliased[key], "alias for --" + key);
}

RunConfig build_config(const ConfigFlags& flags, const std::optional<std::filesystem::path>& checkpoint) {
    RunConfig config;
    if (checkpoint) {
        config = RunConfig::from_file(*checkpoint / "config.txt");
    } else if (flags.preset == "desk") {
        config = RunConfig::desk();
    } else if (!flags.preset.empty() && flags.preset != "full") {
        throw ConfigError("unknown preset '" + flags.preset + "' (expected desk or full)");
    }
    if (!flags.config_file.empty()) config = RunConfig::from_file(flags.config_file, config);
    for (const auto& [key, option] : flags.alias_options) {
        if (option->count() == 0) continue;
        auto value = flags.aliased.at(key);
        if (key == "prior.mode") value = mode_name(parse_mode(value));
        config.set(key, value);
    }
    for (const auto& [key, option] : flags.key_options)
        if (option->count() > 0) config.set(key, flags.keys.at(key));
    return config;
}

std::string loss_header(Mode mode) {
    std::string header = "iteration\tlr";
    for (const auto& c : loss_columns(mode)) header += "\t" + c;
    return header;
}

std::string loss_row(const LossReport& report, Mode mode) {
    std::ostringstream row;
    row.precision(8);
    row << report.iteration << '\t' << report.lr;
    for (const auto& c : loss_columns(mode)) row << '\t' << report.at(c);
    return row.str();
}

std::filesystem::path checkpoint_dir(const std::filesystem::path& out, int64_t iteration) {
    return out / "checkpoints" / ("iter_" + std::to_string(iteration));
}

InpainterPtr load_model_or_identity(const std::optional<std::filesystem::path>& checkpoint, bool identity,
                                    const RunConfig& config, std::string* hash = nullptr) {
    if (identity)
        return std::make_shared<IdentityInpainter>(parse_mode(config.text("prior.mode")),
                                                   config.integer("data.levels"));
    if (!checkpoint) throw ConfigError("a --checkpoint (or --identity-model) is required");
    auto loaded = load_inference(*checkpoint);
    if (hash) *hash = loaded.checkpoint_hash;
    return loaded.inpainter;
}

std::pair<ImageTensor, MaskTensor> read_input(const std::filesystem::path& image_path,
                                              const std::filesystem::path& mask_path, int64_t levels) {
    auto image = decode_image(read_file_bytes(image_path));
    auto mask = decode_mask(read_file_bytes(mask_path));
    if (image.height() != mask.height() || image.width() != mask.width())
        throw ContractError("image and mask sizes differ");
    require_pyramid_size(image.height(), levels);
    require_pyramid_size(image.width(), levels);
    return {std::move(image), std::move(mask)};
}

} // namespace

std::unique_ptr<Dataset> training_dataset(const RunConfig& config) {
    const auto size = config.integer("data.size");
    require_pyramid_size(size, config.integer("data.levels"));
    if (config.integer("data.synthetic") > 0)
        return std::make_unique<SyntheticDataset>(static_cast<std::size_t>(config.integer("data.synthetic")), size, 0);
    if (config.text("data.manifest").empty() || config.text("data.masks").empty())
        throw ConfigError("training data needs data.synthetic > 0 or both data.manifest and data.masks");
    return std::make_unique<FileDataset>(config.text("data.manifest"), config.text("data.masks"), size,
                                         config.boolean("data.center_crop"), config.boolean("data.flip_masks"),
                                         static_cast<uint64_t>(config.integer("run.seed")),
                                         config.integer("data.levels"));
}

std::vector<SamplePair> evaluation_pairs(const RunConfig& config) {
    const auto size = config.integer("data.size");
    std::unique_ptr<Dataset> data;
    if (config.integer("data.synthetic") > 0) {
        data = std::make_unique<SyntheticDataset>(static_cast<std::size_t>(config.integer("data.synthetic")), size,
                                                  kHeldOutSeedBase);
    } else {
        data = training_dataset(config);
    }
    std::vector<SamplePair> pairs;
    for (std::size_t i = 0; i < data->size(); ++i) pairs.push_back(data->get(i));
    return pairs;
}

TrainOutcome train_command(const RunConfig& config, const std::filesystem::path& out,
                           const std::optional<std::filesystem::path>& resume, std::ostream& log) {
    std::filesystem::create_directories(out);
    Trainer trainer = resume ? Trainer::load_checkpoint(*resume, config) : Trainer(config);
    const auto data = training_dataset(config);
    const Mode mode = trainer.train_config().mode;
    const auto total = trainer.train_config().total_iters;
    const auto ckpt_every = config.integer("train.ckpt_every");
    const auto log_every = std::max<int64_t>(1, config.integer("train.log_every"));
    config.save(out / "config.txt");

    const auto loss_path = out / "losses.tsv";
    const bool fresh_log = !resume || !std::filesystem::exists(loss_path);
    std::ofstream losses(loss_path, fresh_log ? std::ios::trunc : std::ios::app);
    if (fresh_log) losses << loss_header(mode) << '\n';

    TrainOutcome outcome;
    if (trainer.iteration() >= total)
        log << "checkpoint already at iteration " << trainer.iteration() << " of " << total << "\n";
    while (trainer.iteration() < total) {
        auto report = trainer.step(trainer.sample_batch(*data));
        losses << loss_row(report, mode) << '\n';
        const auto done = trainer.iteration();
        if (done % log_every == 0 || done == total) log << "iter " << done << "/" << total << " " << report.to_string() << "\n";
        outcome.reports.push_back(std::move(report));
        if ((ckpt_every > 0 && done % ckpt_every == 0) || done == total) {
            outcome.last_checkpoint = checkpoint_dir(out, done);
            trainer.save_checkpoint(outcome.last_checkpoint);
            losses.flush();
        }
    }
    trainer.export_inference(out / "inference");
    outcome.iteration = trainer.iteration();
    if (outcome.last_checkpoint.empty() && resume) outcome.last_checkpoint = *resume;
    return outcome;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"spn: image inpainting with learned semantic prior pyramids"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    ConfigFlags train_flags, eval_flags, infer_flags, vis_flags, serve_flags;
    std::string train_out = "runs/train", resume;
    auto* train = app.add_subcommand("train", "train a model");
    add_config_flags(train, train_flags);
    train->add_option("--out", train_out, "output directory");
    train->add_option("--resume", resume, "checkpoint directory to resume from");

    std::string eval_ckpt, eval_out;
    bool eval_identity = false;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on held-out pairs");
    add_config_flags(eval, eval_flags);
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint or inference export directory");
    eval->add_flag("--identity-model", eval_identity, "score the ground truth itself (debug oracle)");
    eval->add_option("--out", eval_out, "directory for report.tsv / report.txt / pairs.tsv");

    std::string infer_ckpt, infer_image, infer_mask, infer_out = "inpainted.png";
    int64_t infer_samples = 1;
    bool infer_identity = false;
    auto* infer = app.add_subcommand("infer", "inpaint one image");
    add_config_flags(infer, infer_flags);
    infer->add_option("--checkpoint", infer_ckpt, "checkpoint or inference export directory");
    infer->add_flag("--identity-model", infer_identity, "return the input unchanged (debug oracle)");
    infer->add_option("--image", infer_image, "input PNG")->required();
    infer->add_option("--mask", infer_mask, "mask PNG (>= 128 = missing)")->required();
    infer->add_option("--out", infer_out, "output PNG; with several samples _<i> is appended");
    infer->add_option("--samples", infer_samples, "number of samples (probabilistic models)");

    std::string vis_ckpt, vis_image, vis_mask, vis_out = "prior_vis";
    auto* vis = app.add_subcommand("visualize", "K-Means rasters of the prior pyramid");
    add_config_flags(vis, vis_flags);
    vis->add_option("--checkpoint", vis_ckpt, "checkpoint or inference export directory")->required();
    vis->add_option("--image", vis_image, "input PNG")->required();
    vis->add_option("--mask", vis_mask, "mask PNG")->required();
    vis->add_option("--out", vis_out, "output directory");

    std::string serve_ckpt;
    bool serve_identity = false;
    auto* serve = app.add_subcommand("serve", "start the HTTP inference service");
    add_config_flags(serve, serve_flags);
    serve->add_option("--checkpoint", serve_ckpt, "checkpoint served at startup (overrides serve.checkpoint)");
    serve->add_flag("--identity-model", serve_identity, "serve the identity oracle (debug)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << "\n";
        return 2;
    }

    auto optional_path = [](const std::string& s) {
        return s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s);
    };

    try {
        if (train->parsed()) {
            auto resume_dir = optional_path(resume);
            auto config = build_config(train_flags, resume_dir);
            auto outcome = train_command(config, train_out, resume_dir, out);
            out << "trained to iteration " << outcome.iteration << "; last checkpoint " << outcome.last_checkpoint.string()
                << "\n";
        } else if (eval->parsed()) {
            auto ckpt = optional_path(eval_ckpt);
            auto config = build_config(eval_flags, ckpt);
            auto model = load_model_or_identity(ckpt, eval_identity, config);
            const auto pairs = evaluation_pairs(config);
            const auto embedding = make_embedding(config);
            EvalOptions options;
            options.k = config.integer("eval.k");
            options.composited = config.boolean("eval.composited");
            options.seed = static_cast<uint64_t>(config.integer("run.seed"));
            options.embedding = embedding.get();
            const auto report = evaluate(*model, pairs, options);
            for (const auto& w : report.warnings) err << "warning: " << w << "\n";
            out << report.to_table();
            if (!eval_out.empty()) {
                report.write(eval_out);
                config.save(std::filesystem::path(eval_out) / "config.txt");
            }
        } else if (infer->parsed()) {
            auto ckpt = optional_path(infer_ckpt);
            auto config = build_config(infer_flags, ckpt);
            auto model = load_model_or_identity(ckpt, infer_identity, config);
            auto [image, mask] = read_input(infer_image, infer_mask, model->levels());
            int64_t samples = infer_samples;
            if (samples < 1) throw ConfigError("--samples must be at least 1");
            if (model->mode() == Mode::Deterministic && samples > 1) {
                err << "warning: deterministic model produces a single image; ignoring --samples " << samples << "\n";
                samples = 1;
            }
            const auto seed = static_cast<uint64_t>(config.integer("run.seed"));
            const auto images = image.tensor().unsqueeze(0);
            const auto masks = mask.tensor().unsqueeze(0);
            const std::filesystem::path base(infer_out);
            for (int64_t i = 0; i < samples; ++i) {
                const auto s = response_seed(seed, i);
                auto result = model->inpaint(images, masks, {s}).to(torch::kFloat32).clamp(-1.0, 1.0);
                if (config.boolean("eval.composited")) result = composite(result, images, masks);
                auto path = samples == 1 ? base
                                         : base.parent_path() / (base.stem().string() + "_" + std::to_string(i) +
                                                                 base.extension().string());
                if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
                save_image(ImageTensor(result[0].contiguous()), path);
                out << path.string() << "\tseed=" << s << "\n";
            }
        } else if (vis->parsed()) {
            auto ckpt = optional_path(vis_ckpt);
            auto config = build_config(vis_flags, ckpt);
            auto loaded = load_inference(*ckpt);
            auto [image, mask] = read_input(vis_image, vis_mask, loaded.inpainter->levels());
            const auto pyramid = loaded.inpainter->pyramid(image.tensor().unsqueeze(0), mask.tensor().unsqueeze(0),
                                                           static_cast<uint64_t>(config.integer("run.seed")));
            KMeansOptions options;
            options.k = config.integer("eval.clusters");
            options.seed = static_cast<uint64_t>(config.integer("run.seed"));
            const auto levels = visualize_prior(pyramid, options);
            std::filesystem::create_directories(vis_out);
            for (std::size_t l = 0; l < levels.size(); ++l) {
                const auto path = std::filesystem::path(vis_out) / ("level_" + std::to_string(l + 1) + ".png");
                save_image(render_labels(levels[l].labels), path);
                out << path.string() << "\tclusters=" << levels[l].clusters.effective_clusters
                    << (levels[l].clusters.degenerate() ? " (degenerate)" : "") << "\n";
            }
        } else if (serve->parsed()) {
            auto config = build_config(serve_flags, std::nullopt);
            ServiceOptions options;
            options.max_samples = config.integer("serve.max_samples");
            InpaintService service(options);
            const std::string ckpt = serve_ckpt.empty() ? config.text("serve.checkpoint") : serve_ckpt;
            if (serve_identity) {
                service.set_model(std::make_shared<IdentityInpainter>(parse_mode(config.text("prior.mode")),
                                                                      config.integer("data.levels")),
                                  "identity");
            } else if (!ckpt.empty()) {
                service.load(ckpt);
            } else {
                err << "warning: no checkpoint given; /inpaint and /model-info answer 503\n";
            }
            const auto host = config.text("serve.host");
            const auto port = static_cast<int>(config.integer("serve.port"));
            out << "listening on " << host << ":" << port << std::endl;
            run_server(service, host, port);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace spn
