#include "spn/model.hpp"

#include <fstream>
#include <map>

#include "spn/codec.hpp"
#include "spn/errors.hpp"
#include "spn/nn_util.hpp"
#include "spn/tensor_io.hpp"

namespace spn {

namespace {

const std::vector<std::string> kHeadPrefixes{"heads."};

} // namespace

SpnModelImpl::SpnModelImpl(PriorLearnerOptions prior_options, GeneratorOptions generator_options) {
    if (prior_options.channels != generator_options.prior_channels)
        throw ConfigError("generator prior widths do not match the prior learner");
    prior = register_module("prior", PriorLearner(std::move(prior_options)));
    generator = register_module("generator", Generator(std::move(generator_options)));
}

torch::Tensor SpnModelImpl::mask_image(const torch::Tensor& image, const torch::Tensor& mask) {
    return image * (1.0 - mask);
}

SpnForward SpnModelImpl::forward(const torch::Tensor& image, const torch::Tensor& mask,
                                 const std::vector<torch::Tensor>& latents, bool capture_decoder) {
    const auto masked = mask_image(image, mask);
    SpnForward out;
    out.context = prior->encode_context(masked, mask);
    const auto encoded = generator->encode_image(masked, mask);

    auto decode = [&](PriorPyramid pyramid) {
        SpnOutput sample;
        sample.image = generator->decode(encoded, pyramid, capture_decoder ? &sample.decoder : nullptr);
        sample.pyramid = std::move(pyramid);
        out.samples.push_back(std::move(sample));
    };

    if (mode() == Mode::Deterministic) {
        decode(prior->build_pyramid_deterministic(out.context));
        return out;
    }
    if (latents.empty()) throw ContractError("probabilistic forward requires at least one latent");
    out.stats = prior->infer_latent_stats(out.context.levels.back());
    for (const auto& z : latents) decode(prior->build_pyramid_stochastic(out.context, sample_latent(*out.stats, z)));
    return out;
}

SpnModel make_model(const RunConfig& config, const std::vector<int64_t>& head_dims) {
    ScopedSeed scoped(mix_seed(static_cast<uint64_t>(config.integer("run.seed"))));
    return SpnModel(PriorLearnerOptions::from_config(config, head_dims), GeneratorOptions::from_config(config));
}

torch::Tensor latents_for_seeds(const std::vector<uint64_t>& seeds, int64_t latent_dim) {
    std::vector<torch::Tensor> rows;
    rows.reserve(seeds.size());
    for (auto seed : seeds) {
        auto gen = make_generator(seed);
        rows.push_back(torch::randn({1, latent_dim}, gen));
    }
    return torch::cat(rows, 0);
}

ModelInpainter::ModelInpainter(SpnModel model, std::string identity)
    : model_(std::move(model)), identity_(std::move(identity)) {
    freeze(*model_);
}

torch::Tensor ModelInpainter::inpaint(const torch::Tensor& images, const torch::Tensor& masks,
                                      const std::vector<uint64_t>& seeds) const {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> latents;
    if (model_->mode() == Mode::Probabilistic) {
        if (static_cast<int64_t>(seeds.size()) != images.size(0))
            throw ContractError("probabilistic inpainting needs one seed per image");
        latents.push_back(latents_for_seeds(seeds, model_->latent_dim()));
    }
    return model_->forward(images, masks, latents).samples.front().image;
}

PriorPyramid ModelInpainter::pyramid(const torch::Tensor& images, const torch::Tensor& masks, uint64_t seed) const {
    torch::NoGradGuard no_grad;
    std::vector<torch::Tensor> latents;
    if (model_->mode() == Mode::Probabilistic)
        latents.push_back(latents_for_seeds(std::vector<uint64_t>(images.size(0), seed), model_->latent_dim()));
    return model_->forward(images, masks, latents).samples.front().pyramid;
}

void write_meta(const std::filesystem::path& dir, const CheckpointMeta& meta) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "meta");
    out << "format_version = " << meta.format_version << "\n"
        << "iteration = " << meta.iteration << "\n"
        << "mode = " << meta.mode << "\n"
        << "kind = " << meta.kind << "\n";
    if (!out) throw Error("cannot write " + (dir / "meta").string());
}

CheckpointMeta read_meta(const std::filesystem::path& dir) {
    std::ifstream in(dir / "meta");
    if (!in) throw Error("not a checkpoint directory (no meta file): " + dir.string());
    std::map<std::string, std::string> fields;
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
        };
        fields[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    CheckpointMeta meta;
    try {
        meta.format_version = std::stoll(fields.at("format_version"));
        meta.iteration = std::stoll(fields.at("iteration"));
        meta.mode = fields.at("mode");
        meta.kind = fields.at("kind");
    } catch (const std::exception&) {
        throw Error("malformed meta file in " + dir.string());
    }
    if (meta.format_version != kCheckpointVersion)
        throw CheckpointVersionError("checkpoint " + dir.string() + " has format version " +
                                     std::to_string(meta.format_version) + ", this build reads version " +
                                     std::to_string(kCheckpointVersion) + " and has no migration for it");
    return meta;
}

void export_inference(const SpnModel& model, const RunConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "params");
    write_tensor_blob(dir / "params" / "prior.bin", module_state(*model->prior, kHeadPrefixes));
    write_tensor_blob(dir / "params" / "gen.bin", module_state(*model->generator));
    config.save(dir / "config.txt");
    write_meta(dir, {kCheckpointVersion, 0, mode_name(model->mode()), "inference"});
}

LoadedModel load_inference(const std::filesystem::path& dir) {
    const auto meta = read_meta(dir);
    auto config = RunConfig::from_file(dir / "config.txt");
    auto model = make_model(config);
    const auto prior_path = dir / "params" / "prior.bin";
    const auto gen_path = dir / "params" / "gen.bin";
    load_module_state(*model->prior, read_tensor_blob(prior_path), prior_path.string(), kHeadPrefixes);
    load_module_state(*model->generator, read_tensor_blob(gen_path), gen_path.string());

    auto bytes = read_file_bytes(prior_path);
    const auto gen_bytes = read_file_bytes(gen_path);
    bytes.insert(bytes.end(), gen_bytes.begin(), gen_bytes.end());

    LoadedModel loaded{nullptr, config, sha256_hex(bytes)};
    loaded.inpainter = std::make_shared<ModelInpainter>(
        model, meta.kind + ":" + loaded.checkpoint_hash.substr(0, 12) + ":" + mode_name(model->mode()));
    return loaded;
}

} // namespace spn
