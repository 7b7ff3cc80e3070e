#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <string>

#include "spn/model.hpp"

namespace httplib {
class Server;
}

namespace spn {

struct ServiceOptions {
    int64_t max_samples = 16;
    std::size_t max_payload_bytes = 16u << 20;
};

struct HttpResponse {
    int status = 200;
    std::string body; // JSON
};

// Seeds are kept below 2^53 so they survive a round trip through JSON numbers
// in browser clients.
constexpr uint64_t kMaxSeed = (uint64_t{1} << 53) - 1;

// Seed echoed for sample i of a request with base seed s: s itself for i = 0,
// a hash of (s, i) otherwise. Resubmitting an echoed seed with samples = 1
// reproduces that sample.
uint64_t response_seed(uint64_t seed, int64_t sample_index);

// Request handling for the inference endpoints, independent of the transport.
// Requests run concurrently against read-only weights; `load` and
// `set_model` wait for in-flight requests and block new ones.
class InpaintService {
public:
    explicit InpaintService(ServiceOptions options = {});

    void load(const std::filesystem::path& checkpoint);
    void set_model(InpainterPtr model, std::string checkpoint_hash);
    bool loaded() const;

    HttpResponse inpaint(const std::string& request_body) const;
    HttpResponse model_info() const;
    HttpResponse health() const;

    // Registers POST /inpaint, GET /model-info and GET /health.
    void bind(httplib::Server& server) const;

private:
    ServiceOptions options_;
    mutable std::shared_mutex mutex_;
    InpainterPtr model_;
    std::string checkpoint_hash_;
};

// Blocks serving on host:port until the process is stopped.
void run_server(const InpaintService& service, const std::string& host, int port);

} // namespace spn
