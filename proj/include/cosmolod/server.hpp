#pragma once

#include "cosmolod/dataset.hpp"
#include "cosmolod/selection.hpp"

#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

namespace httplib {
class Server;
}

namespace cosmolod {

/// Response produced by an API handler, independent of the transport.
struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

inline constexpr std::size_t kMaxSelectionTokens = 16;

/// Live selection sets addressed by opaque 64-bit tokens. Holds at most
/// kMaxSelectionTokens sets; registering beyond that drops the least
/// recently used one. Thread-safe.
class SelectionRegistry {
public:
    SelectionRegistry();

    /// Throws SelectionCapError when `ids` exceeds the cap.
    std::uint64_t register_ids(std::span<const std::uint64_t> ids);
    std::shared_ptr<const SelectionSet> find(std::uint64_t token);
    std::size_t size() const;

    static std::string format_token(std::uint64_t token);
    static std::optional<std::uint64_t> parse_token(const std::string& text);

private:
    mutable std::mutex mutex_;
    std::uint64_t salt_;
    std::uint64_t counter_ = 0;
    std::list<std::pair<std::uint64_t, std::shared_ptr<const SelectionSet>>> entries_; // front = most recent
};

/// Request handlers for the dataset API. Each method is safe to call
/// concurrently.
class DatasetApi {
public:
    explicit DatasetApi(std::shared_ptr<const Dataset> dataset) : dataset_(std::move(dataset)) {}

    ApiResponse meta() const;
    ApiResponse index(const std::string& interval) const;
    ApiResponse block(const std::string& interval, const std::string& path) const;
    ApiResponse resolve(const std::string& body) const;
    ApiResponse register_selection(const std::string& body);
    ApiResponse selection_flags(const std::string& token, const std::string& interval, const std::string& path);

    const Dataset& dataset() const noexcept { return *dataset_; }
    SelectionRegistry& selections() noexcept { return selections_; }

private:
    std::shared_ptr<const Dataset> dataset_;
    SelectionRegistry selections_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080; ///< 0 picks a free port
    std::string web_root; ///< static viewer files mounted at "/", if set
    int worker_threads = 32;
};

/// HTTP front end for DatasetApi.
class StreamServer {
public:
    StreamServer(std::shared_ptr<const Dataset> dataset, ServerOptions options);
    ~StreamServer();
    StreamServer(const StreamServer&) = delete;
    StreamServer& operator=(const StreamServer&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();

    int port() const noexcept { return port_; }
    DatasetApi& api() noexcept { return api_; }

private:
    void install_routes();
    int bind();

    DatasetApi api_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> http_;
    std::thread thread_;
    int port_ = 0;
};

} // namespace cosmolod
