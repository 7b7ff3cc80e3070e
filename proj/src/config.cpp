#include "spn/config.hpp"

#include "spn/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace spn {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

bool parse_int(const std::string& text, int64_t& out) {
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && ptr == end;
}

bool parse_real(const std::string& text, double& out) {
    if (text.empty()) return false;
    try {
        std::size_t used = 0;
        out = std::stod(text, &used);
        return used == text.size();
    } catch (const std::exception&) {
        return false;
    }
}

bool parse_bool(const std::string& text, bool& out) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") {
        out = true;
        return true;
    }
    if (text == "false" || text == "0" || text == "no" || text == "off") {
        out = false;
        return true;
    }
    return false;
}

const KeySpec& spec_for(const std::string& key) {
    const auto& schema = config_schema();
    auto it = std::find_if(schema.begin(), schema.end(), [&](const KeySpec& s) { return s.key == key; });
    if (it == schema.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return *it;
}

} // namespace

std::vector<int64_t> parse_int_list(const std::string& text) {
    std::vector<int64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        int64_t v = 0;
        if (!parse_int(item, v)) throw ConfigError("invalid integer list '" + text + "'");
        out.push_back(v);
    }
    return out;
}

std::string format_int_list(const std::vector<int64_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(values[i]);
    }
    return out;
}

const std::vector<KeySpec>& config_schema() {
    using K = ValueKind;
    static const std::vector<KeySpec> schema = {
        {"run.seed", K::Int, "0", "global RNG seed", {}},

        {"data.size", K::Int, "256", "square image side in pixels", {}},
        {"data.levels", K::Int, "3", "pyramid levels L", {}},
        {"data.manifest", K::Text, "", "newline-delimited image path list", {}},
        {"data.masks", K::Text, "", "directory scanned recursively for mask PNGs", {}},
        {"data.synthetic", K::Int, "0", "number of synthetic pairs (0 = use manifest)", {}},
        {"data.center_crop", K::Bool, "true", "center-crop images before resizing", {}},
        {"data.flip_masks", K::Bool, "true", "random horizontal/vertical mask flips", {}},

        {"pretext.kind", K::Choice, "stub", "distillation target extractor",
         {"classification", "detection", "segmentation", "edge", "stub"}},
        {"pretext.weights", K::Text, "", "backbone weight blob for pretrained extractors", {}},
        {"pretext.stages", K::IntList, "0,1,2", "backbone stages tapped for targets", {}},
        {"pretext.channels", K::IntList, "32,64,128", "stub extractor channel widths", {}},
        {"pretext.seed", K::Int, "7", "stub extractor init seed", {}},

        {"prior.mode", K::Choice, "deterministic", "prior learner mode", {"deterministic", "probabilistic"}},
        {"prior.channels", K::IntList, "64,128,256", "prior pyramid widths c_1..c_L", {}},
        {"prior.latent_dim", K::Int, "256", "latent size d_z", {}},
        {"prior.gv_uses_context", K::Bool, "false", "feed top context features into G_v", {}},
        {"prior.gv_grid", K::Int, "4", "spatial grid emitted by the G_v projection", {}},
        {"prior.res_blocks", K::Int, "2", "residual blocks in the top Multi-ResBlock", {}},
        {"prior.rdb_layers", K::Int, "4", "dense layers in the residual dense block", {}},
        {"prior.rdb_growth", K::Int, "32", "growth rate of the residual dense block", {}},

        {"gen.channels", K::IntList, "64,128,256", "generator widths per level", {}},
        {"gen.bottom_blocks", K::Int, "8", "SPADE ResBlocks at the coarsest level", {}},
        {"gen.spade_hidden", K::Int, "128", "SPADE shared convolution width", {}},

        {"disc.channels", K::IntList, "64,128,256,512", "discriminator widths before the patch layer", {}},
        {"disc.power_iterations", K::Int, "1", "spectral-norm power iterations per training forward", {}},
        {"adv.loss_form", K::Choice, "minimax", "adversarial objective form", {"minimax", "nonsaturating"}},

        {"perc.kind", K::Choice, "stub", "perceptual network", {"vgg19", "stub"}},
        {"perc.channels", K::IntList, "64,128,256,512,512", "perceptual stage widths", {}},
        {"perc.convs", K::IntList, "2,2,4,4,4", "convolutions per perceptual stage", {}},
        {"perc.weights", K::Text, "", "perceptual network weight blob", {}},
        {"perc.seed", K::Int, "11", "stub perceptual init seed", {}},

        {"loss.alpha", K::Real, "3", "distillation mask emphasis", {}},
        {"loss.delta", K::Real, "4", "reconstruction mask emphasis", {}},
        {"loss.lambda1", K::Real, "10", "reconstruction weight", {}},
        {"loss.lambda2", K::Real, "1", "adversarial weight", {}},
        {"loss.lambda3", K::Real, "10", "feature matching + perceptual weight", {}},
        {"loss.lambda4", K::Real, "1", "perceptual diversity weight", {}},
        {"loss.lambda5", K::Real, "0.05", "KL weight", {}},
        {"loss.epsilon", K::Real, "1e-05", "diversity perturbation", {}},

        {"train.iters", K::Int, "150000", "total training iterations", {}},
        {"train.batch_size", K::Int, "8", "batch size", {}},
        {"train.lr_initial", K::Real, "0.0001", "learning rate before decay", {}},
        {"train.lr_final", K::Real, "1e-05", "learning rate after decay", {}},
        {"train.decay_fraction", K::Real, "0.75", "fraction of training before the step decay", {}},
        {"train.beta1", K::Real, "0", "Adam beta1", {}},
        {"train.beta2", K::Real, "0.9", "Adam beta2", {}},
        {"train.clip_norm", K::Real, "10", "global gradient-norm clip (0 disables)", {}},
        {"train.ckpt_every", K::Int, "1000", "checkpoint interval in iterations", {}},
        {"train.log_every", K::Int, "10", "loss log interval in iterations", {}},

        {"eval.k", K::Int, "0", "samples per pair for best-of-k (0 = 1 det / 5 prob)", {}},
        {"eval.composited", K::Bool, "true", "compute metrics on composited outputs", {}},
        {"eval.embedding", K::Choice, "stub", "FID embedding network", {"stub"}},
        {"eval.embedding_dim", K::Int, "64", "FID embedding size", {}},
        {"eval.clusters", K::Int, "8", "K-Means clusters for prior visualization", {}},

        {"serve.host", K::Text, "127.0.0.1", "bind address", {}},
        {"serve.port", K::Int, "8080", "listen port", {}},
        {"serve.checkpoint", K::Text, "", "checkpoint served at startup", {}},
        {"serve.max_samples", K::Int, "16", "maximum samples per request", {}},
    };
    return schema;
}

RunConfig::RunConfig() {
    for (const auto& spec : config_schema()) values_[spec.key] = spec.default_value;
}

RunConfig RunConfig::desk() {
    RunConfig cfg;
    cfg.set("data.size", "64");
    cfg.set("data.synthetic", "1024");
    cfg.set("prior.channels", "32,64,128");
    cfg.set("prior.latent_dim", "128");
    cfg.set("prior.rdb_growth", "16");
    cfg.set("gen.channels", "16,32,64");
    cfg.set("gen.spade_hidden", "32");
    cfg.set("disc.channels", "32,64,128,256");
    cfg.set("perc.channels", "16,32,64,64,64");
    cfg.set("perc.convs", "1,1,1,1,1");
    cfg.set("train.iters", "2000");
    cfg.set("train.ckpt_every", "500");
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
    const auto& spec = spec_for(key);
    const std::string value = trim(raw);
    switch (spec.kind) {
    case ValueKind::Int: {
        int64_t v = 0;
        if (!parse_int(value, v)) throw ConfigError("key '" + key + "' expects an integer, got '" + value + "'");
        break;
    }
    case ValueKind::Real: {
        double v = 0;
        if (!parse_real(value, v)) throw ConfigError("key '" + key + "' expects a number, got '" + value + "'");
        break;
    }
    case ValueKind::Bool: {
        bool v = false;
        if (!parse_bool(value, v)) throw ConfigError("key '" + key + "' expects a boolean, got '" + value + "'");
        break;
    }
    case ValueKind::IntList:
        if (parse_int_list(value).empty()) throw ConfigError("key '" + key + "' expects a non-empty list");
        break;
    case ValueKind::Choice:
        if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end())
            throw ConfigError("key '" + key + "' does not accept '" + value + "'");
        break;
    case ValueKind::Text:
        break;
    }
    values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

const std::string& RunConfig::text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
    return it->second;
}

int64_t RunConfig::integer(const std::string& key) const {
    int64_t v = 0;
    if (!parse_int(text(key), v)) throw ConfigError("key '" + key + "' is not an integer");
    return v;
}

double RunConfig::real(const std::string& key) const {
    double v = 0;
    if (!parse_real(text(key), v)) throw ConfigError("key '" + key + "' is not a number");
    return v;
}

bool RunConfig::boolean(const std::string& key) const {
    bool v = false;
    if (!parse_bool(text(key), v)) throw ConfigError("key '" + key + "' is not a boolean");
    return v;
}

std::vector<int64_t> RunConfig::int_list(const std::string& key) const { return parse_int_list(text(key)); }

RunConfig RunConfig::from_text(const std::string& text, RunConfig base) {
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return base;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str(), std::move(base));
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& spec : config_schema()) out += spec.key + " = " + values_.at(spec.key) + "\n";
    return out;
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config file " + path.string());
    out << to_text();
}

} // namespace spn
