#include "spn/service.hpp"

#include <mutex>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "spn/codec.hpp"
#include "spn/data.hpp"
#include "spn/errors.hpp"
#include "spn/nn_util.hpp"
#include "spn/version.hpp"

using json = nlohmann::json;

namespace spn {

namespace {

HttpResponse reply(int status, const json& body) { return {status, body.dump()}; }

HttpResponse error_reply(int status, const std::string& message) { return reply(status, {{"error", message}}); }

uint64_t fresh_seed() {
    std::random_device device;
    const uint64_t hi = device();
    const uint64_t lo = device();
    return ((hi << 32) | lo) & kMaxSeed;
}

template <typename T>
T field(const json& request, const char* key, T fallback) {
    if (!request.contains(key) || request[key].is_null()) return fallback;
    try {
        return request[key].get<T>();
    } catch (const json::exception&) {
        throw ProtocolError(std::string("field '") + key + "' has the wrong type");
    }
}

} // namespace

uint64_t response_seed(uint64_t seed, int64_t sample_index) {
    if (sample_index == 0) return seed;
    return sample_seed(seed, static_cast<uint64_t>(sample_index)) & kMaxSeed;
}

InpaintService::InpaintService(ServiceOptions options) : options_(options) {}

void InpaintService::load(const std::filesystem::path& checkpoint) {
    auto loaded = load_inference(checkpoint);
    set_model(loaded.inpainter, loaded.checkpoint_hash);
}

void InpaintService::set_model(InpainterPtr model, std::string checkpoint_hash) {
    std::unique_lock lock(mutex_);
    model_ = std::move(model);
    checkpoint_hash_ = std::move(checkpoint_hash);
}

bool InpaintService::loaded() const {
    std::shared_lock lock(mutex_);
    return static_cast<bool>(model_);
}

HttpResponse InpaintService::health() const { return reply(200, {{"status", "ok"}, {"version", kVersion}}); }

HttpResponse InpaintService::model_info() const {
    std::shared_lock lock(mutex_);
    if (!model_) return error_reply(503, "no model loaded");
    const int64_t multiple = int64_t{1} << (model_->levels() - 1);
    return reply(200, {{"mode", mode_name(model_->mode())},
                       {"levels", model_->levels()},
                       {"size_multiple", multiple},
                       {"checkpoint_hash", checkpoint_hash_},
                       {"identity", model_->identity()},
                       {"max_samples", options_.max_samples},
                       {"version", kVersion}});
}

HttpResponse InpaintService::inpaint(const std::string& request_body) const {
    if (request_body.size() > options_.max_payload_bytes) return error_reply(413, "payload exceeds 16 MiB");
    std::shared_lock lock(mutex_);
    if (!model_) return error_reply(503, "no model loaded");

    json request;
    try {
        request = json::parse(request_body);
    } catch (const json::exception&) {
        return error_reply(400, "request body is not valid JSON");
    }
    if (!request.is_object()) return error_reply(400, "request body must be a JSON object");

    ImageTensor image;
    MaskTensor mask;
    int64_t samples = 1;
    uint64_t seed = 0;
    bool composited = true;
    try {
        if (!request.contains("image") || !request.contains("mask"))
            return error_reply(400, "request needs 'image' and 'mask'");
        samples = field<int64_t>(request, "samples", 1);
        composited = field<bool>(request, "composited", true);
        if (request.contains("seed") && !request["seed"].is_null()) {
            if (!request["seed"].is_number_unsigned()) return error_reply(400, "seed must be a nonnegative integer");
            seed = request["seed"].get<uint64_t>();
            if (seed > kMaxSeed) return error_reply(400, "seed must be below 2^53");
        } else {
            seed = fresh_seed();
        }
        image = decode_image(base64_decode(field<std::string>(request, "image", "")));
        mask = decode_mask(base64_decode(field<std::string>(request, "mask", "")));
    } catch (const Error& e) {
        return error_reply(400, e.what());
    }
    if (samples < 1 || samples > options_.max_samples)
        return error_reply(400, "samples must lie in [1, " + std::to_string(options_.max_samples) + "]");
    if (image.height() != mask.height() || image.width() != mask.width())
        return error_reply(400, "image and mask sizes differ");
    const int64_t multiple = int64_t{1} << (model_->levels() - 1);
    if (image.height() % multiple != 0 || image.width() % multiple != 0)
        return error_reply(400, "image size must be a multiple of " + std::to_string(multiple));

    json body;
    int status = 200;
    if (model_->mode() == Mode::Deterministic && samples > 1) {
        status = 409;
        body["warning"] = "deterministic model returns a single image; samples downgraded to 1";
        samples = 1;
    }

    const auto images = image.tensor().unsqueeze(0);
    const auto masks = mask.tensor().unsqueeze(0);
    json encoded = json::array();
    json seeds = json::array();
    for (int64_t i = 0; i < samples; ++i) {
        const uint64_t s = response_seed(seed, i);
        auto out = model_->inpaint(images, masks, {s}).to(torch::kFloat32).clamp(-1.0, 1.0);
        if (composited) out = composite(out, images, masks);
        encoded.push_back(base64_encode(encode_png(ImageTensor(out[0].contiguous()))));
        seeds.push_back(s);
    }
    body["images"] = encoded;
    body["seeds"] = seeds;
    body["model_info"] = {{"checkpoint_hash", checkpoint_hash_},
                          {"identity", model_->identity()},
                          {"mode", mode_name(model_->mode())}};
    return reply(status, body);
}

void InpaintService::bind(httplib::Server& server) const {
    auto send = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };
    server.set_payload_max_length(options_.max_payload_bytes);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server.Get("/model-info",
               [this, send](const httplib::Request&, httplib::Response& res) { send(res, model_info()); });
    server.Post("/inpaint", [this, send](const httplib::Request& req, httplib::Response& res) {
        try {
            send(res, inpaint(req.body));
        } catch (const std::exception& e) {
            send(res, error_reply(500, e.what()));
        }
    });
}

void run_server(const InpaintService& service, const std::string& host, int port) {
    httplib::Server server;
    service.bind(server);
    if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

} // namespace spn
