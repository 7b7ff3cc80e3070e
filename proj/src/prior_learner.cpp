#include "spn/prior_learner.hpp"

#include "spn/config.hpp"
#include "spn/errors.hpp"
#include "spn/nn_util.hpp"

namespace F = torch::nn::functional;

namespace spn {

Mode parse_mode(const std::string& text) {
    if (text == "deterministic" || text == "det") return Mode::Deterministic;
    if (text == "probabilistic" || text == "prob") return Mode::Probabilistic;
    throw ConfigError("unknown mode '" + text + "' (expected det|prob)");
}

std::string mode_name(Mode mode) { return mode == Mode::Deterministic ? "deterministic" : "probabilistic"; }

torch::Tensor sample_latent(const LatentStats& stats, const torch::Tensor& z) {
    if (z.sizes() != stats.mu.sizes())
        throw ShapeError("sample_latent: z has " + std::to_string(z.numel()) + " elements, expected " +
                         std::to_string(stats.mu.numel()));
    return z * stats.sigma() + stats.mu;
}

PriorLearnerOptions PriorLearnerOptions::from_config(const RunConfig& config, std::vector<int64_t> head_dims) {
    PriorLearnerOptions o;
    o.channels = config.int_list("prior.channels");
    o.latent_dim = config.integer("prior.latent_dim");
    o.mode = parse_mode(config.text("prior.mode"));
    o.gv_uses_context = config.boolean("prior.gv_uses_context");
    o.gv_grid = config.integer("prior.gv_grid");
    o.res_blocks = config.integer("prior.res_blocks");
    o.rdb_layers = config.integer("prior.rdb_layers");
    o.rdb_growth = config.integer("prior.rdb_growth");
    o.head_dims = std::move(head_dims);
    if (o.levels() != config.integer("data.levels"))
        throw ConfigError("prior.channels must list one width per pyramid level");
    return o;
}

ResBlockImpl::ResBlockImpl(int64_t channels) {
    conv1 = register_module("conv1", conv3x3(channels, channels));
    conv2 = register_module("conv2", conv3x3(channels, channels));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) { return x + conv2->forward(leaky(conv1->forward(x))); }

ResidualDenseBlockImpl::ResidualDenseBlockImpl(int64_t channels, int64_t layers, int64_t growth) {
    for (int64_t i = 0; i < layers; ++i) dense->push_back(conv3x3(channels + i * growth, growth));
    register_module("dense", dense);
    fuse = register_module("fuse", conv1x1(channels + layers * growth, channels));
}

torch::Tensor ResidualDenseBlockImpl::forward(const torch::Tensor& x) {
    std::vector<torch::Tensor> features{x};
    for (auto& m : *dense) features.push_back(leaky(m->as<torch::nn::Conv2d>()->forward(torch::cat(features, 1))));
    return x + fuse->forward(torch::cat(features, 1));
}

PriorLearnerImpl::PriorLearnerImpl(PriorLearnerOptions options) : options_(std::move(options)) {
    const auto& c = options_.channels;
    const int64_t levels = options_.levels();
    if (levels < 1) throw ConfigError("prior learner needs at least one level");
    for (int64_t l = 1; l < levels; ++l)
        if (c[l] % 4 != 0)
            throw ConfigError("pixel shuffle needs level width divisible by 4, got " + std::to_string(c[l]));
    if (has_heads() && static_cast<int64_t>(options_.head_dims.size()) != levels)
        throw ConfigError("distillation heads: " + std::to_string(options_.head_dims.size()) +
                          " target widths for " + std::to_string(levels) + " levels");

    head = register_module("head", conv3x3(4, c[0]));
    for (int64_t l = 0; l < levels; ++l) down->push_back(conv_down(l == 0 ? c[0] : c[l - 1], c[l]));
    register_module("down", down);
    rdb = register_module("rdb", ResidualDenseBlock(c[levels - 1], options_.rdb_layers, options_.rdb_growth));

    if (options_.mode == Mode::Deterministic) {
        for (int64_t i = 0; i < options_.res_blocks; ++i) top_blocks->push_back(ResBlock(c[levels - 1]));
        register_module("top_blocks", top_blocks);
    }
    for (int64_t l = 0; l + 1 < levels; ++l) {
        merge->push_back(conv1x1(c[l + 1] / 4 + c[l], c[l]));
        merge_blocks->push_back(ResBlock(c[l]));
    }
    register_module("merge", merge);
    register_module("merge_blocks", merge_blocks);

    if (has_heads()) {
        for (int64_t l = 0; l < levels; ++l) heads->push_back(conv1x1(c[l], options_.head_dims[l]));
        register_module("heads", heads);
    }

    if (options_.mode == Mode::Probabilistic) {
        const int64_t top = c[levels - 1];
        const int64_t grid = options_.gv_grid;
        ev_mu = register_module("ev_mu", torch::nn::Linear(top, options_.latent_dim));
        ev_logvar = register_module("ev_logvar", torch::nn::Linear(top, options_.latent_dim));
        {
            torch::NoGradGuard no_grad;
            ev_logvar->weight.zero_();
            ev_logvar->bias.zero_();
        }
        gv_fc = register_module("gv_fc", torch::nn::Linear(options_.latent_dim, top * grid * grid));
        if (options_.gv_uses_context) gv_context = register_module("gv_context", conv1x1(2 * top, top));
        for (int i = 0; i < 2; ++i) gv_blocks->push_back(ResBlock(top));
        register_module("gv_blocks", gv_blocks);
    }
}

ContextFeatures PriorLearnerImpl::encode_context(const torch::Tensor& masked_image, const torch::Tensor& mask) {
    const int64_t levels = options_.levels();
    auto x = torch::cat({upsample_bilinear2x(masked_image), upsample_bilinear2x(mask)}, 1);
    const int64_t step = int64_t{1} << levels;
    if (x.size(2) % step != 0 || x.size(3) % step != 0)
        throw ShapeError("prior learner input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                         " is not divisible by 2^L = " + std::to_string(step));
    ContextFeatures ctx;
    x = leaky(head->forward(x));
    for (int64_t l = 0; l < levels; ++l) {
        x = leaky(down[l]->as<torch::nn::Conv2d>()->forward(x));
        if (l == levels - 1) x = rdb->forward(x);
        ctx.levels.push_back(x);
    }
    return ctx;
}

PriorPyramid PriorLearnerImpl::decode_lower_levels(const ContextFeatures& ctx, torch::Tensor top) {
    const int64_t levels = options_.levels();
    PriorPyramid pyramid;
    pyramid.levels.resize(levels);
    pyramid.levels[levels - 1] = top;
    for (int64_t l = levels - 2; l >= 0; --l) {
        auto up = F::pixel_shuffle(pyramid.levels[l + 1], 2);
        auto merged = leaky(merge[l]->as<torch::nn::Conv2d>()->forward(torch::cat({up, ctx.levels[l]}, 1)));
        pyramid.levels[l] = merge_blocks[l]->as<ResBlock>()->forward(merged);
    }
    return pyramid;
}

PriorPyramid PriorLearnerImpl::build_pyramid_deterministic(const ContextFeatures& ctx) {
    if (options_.mode != Mode::Deterministic) throw ModeError("deterministic pyramid requested from a probabilistic learner");
    auto top = ctx.levels.back();
    for (auto& m : *top_blocks) top = m->as<ResBlock>()->forward(top);
    return decode_lower_levels(ctx, top);
}

LatentStats PriorLearnerImpl::infer_latent_stats(const torch::Tensor& top_context) {
    if (options_.mode != Mode::Probabilistic) throw ModeError("latent statistics requested from a deterministic learner");
    auto pooled = top_context.mean({2, 3});
    return LatentStats{ev_mu->forward(pooled), ev_logvar->forward(pooled), {}};
}

PriorPyramid PriorLearnerImpl::build_pyramid_stochastic(const ContextFeatures& ctx, const torch::Tensor& z_hat) {
    if (options_.mode != Mode::Probabilistic) throw ModeError("stochastic pyramid requested from a deterministic learner");
    const auto& top_ctx = ctx.levels.back();
    const int64_t top = options_.channels.back();
    const int64_t grid = options_.gv_grid;
    auto s = gv_fc->forward(z_hat).view({z_hat.size(0), top, grid, grid});
    s = F::interpolate(s, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{top_ctx.size(2), top_ctx.size(3)})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    if (options_.gv_uses_context) s = leaky(gv_context->forward(torch::cat({s, top_ctx}, 1)));
    for (auto& m : *gv_blocks) s = m->as<ResBlock>()->forward(s);
    return decode_lower_levels(ctx, s);
}

std::vector<torch::Tensor> PriorLearnerImpl::distill_project(const PriorPyramid& pyramid) {
    if (!has_heads()) throw ConfigError("distillation heads are not present (inference model)");
    std::vector<torch::Tensor> out;
    for (std::size_t l = 0; l < pyramid.levels.size(); ++l)
        out.push_back(heads[l]->as<torch::nn::Conv2d>()->forward(pyramid.levels[l]));
    return out;
}

} // namespace spn
