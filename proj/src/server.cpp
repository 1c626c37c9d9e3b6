#include "cosmolod/server.hpp"
#include "cosmolod/cut.hpp"
#include "cosmolod/hash.hpp"

#include "httplib.h"
#include "json.hpp"

#include <charconv>
#include <cstdio>
#include <random>

namespace cosmolod {

using nlohmann::json;

namespace {

ApiResponse error_response(int status, const std::string& message)
{
    return {status, "application/json", json{{"error", message}}.dump()};
}

ApiResponse binary_response(std::string body)
{
    return {200, "application/octet-stream", std::move(body)};
}

std::optional<std::uint64_t> parse_u64(const std::string& text)
{
    std::uint64_t value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end || text.empty())
        return std::nullopt;
    return value;
}

std::string to_string_body(std::span<const std::byte> bytes)
{
    return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

} // namespace

// ---------------------------------------------------------------------------
// SelectionRegistry

SelectionRegistry::SelectionRegistry() : salt_(std::random_device{}() ^ (std::uint64_t(std::random_device{}()) << 32))
{
}

std::uint64_t SelectionRegistry::register_ids(std::span<const std::uint64_t> ids)
{
    auto set = std::make_shared<const SelectionSet>(SelectionSet::from_ids(ids));
    std::lock_guard lock(mutex_);
    // mix64 is a bijection, so distinct counters give distinct tokens.
    const std::uint64_t token = mix64(salt_ + ++counter_);
    entries_.emplace_front(token, std::move(set));
    while (entries_.size() > kMaxSelectionTokens)
        entries_.pop_back();
    return token;
}

std::shared_ptr<const SelectionSet> SelectionRegistry::find(std::uint64_t token)
{
    std::lock_guard lock(mutex_);
    for (auto it = entries_.begin(); it != entries_.end(); ++it)
        if (it->first == token) {
            entries_.splice(entries_.begin(), entries_, it);
            return entries_.front().second;
        }
    return nullptr;
}

std::size_t SelectionRegistry::size() const
{
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::string SelectionRegistry::format_token(std::uint64_t token)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(token));
    return buf;
}

std::optional<std::uint64_t> SelectionRegistry::parse_token(const std::string& text)
{
    if (text.size() != 16)
        return std::nullopt;
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        return std::nullopt;
    return value;
}

// ---------------------------------------------------------------------------
// DatasetApi

ApiResponse DatasetApi::meta() const { return {200, "application/json", dataset_->meta_text()}; }

ApiResponse DatasetApi::index(const std::string& interval) const
{
    const auto s = parse_u64(interval);
    if (!s || *s >= dataset_->meta().intervals())
        return error_response(404, "unknown interval " + interval);
    return binary_response(to_string_body(read_file_bytes(dataset_->index_path(*s))));
}

ApiResponse DatasetApi::block(const std::string& interval, const std::string& path) const
{
    const auto s = parse_u64(interval);
    if (!s || *s >= dataset_->meta().intervals())
        return error_response(404, "unknown interval " + interval);
    const auto code = parse_u64(path);
    if (!code || !is_valid_path(*code))
        return error_response(404, "unknown block " + path);
    const auto bytes = dataset_->block_bytes(*s, NodePath{*code});
    if (!bytes)
        return error_response(404, "no block " + path + " in interval " + interval);
    return binary_response(to_string_body(*bytes));
}

ApiResponse DatasetApi::resolve(const std::string& body) const
{
    json request;
    try {
        request = json::parse(body);
    } catch (const json::exception& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    }
    if (!request.is_object() || !request.contains("camera") || !request.contains("interval"))
        return error_response(400, "resolve needs \"interval\" and \"camera\"");

    Camera cam;
    double tau = 2.0;
    std::uint64_t budget = 200000;
    std::uint64_t s = 0;
    try {
        cam = Camera::from_json(request.at("camera").dump());
        tau = request.value("tau", tau);
        budget = request.value("budget", budget);
        s = request.at("interval").get<std::uint64_t>();
    } catch (const std::exception& e) {
        return error_response(400, e.what());
    }
    if (!(tau > 0.0))
        return error_response(400, "tau must be positive");
    if (s >= dataset_->meta().intervals())
        return error_response(404, "unknown interval " + std::to_string(s));

    const TreeIndex& index = dataset_->index(s);
    const Cut cut = select_cut(index, dataset_->meta().root, static_cast<std::uint32_t>(s), cam, tau, budget);
    return {200, "application/json", cut_to_json(cut, index)};
}

ApiResponse DatasetApi::register_selection(const std::string& body)
{
    std::vector<std::uint64_t> ids;
    try {
        const json request = json::parse(body);
        const json& list = request.at("ids");
        if (!list.is_array())
            return error_response(400, "\"ids\" must be an array");
        if (list.size() > kSelectionCap)
            return error_response(413, "selection of " + std::to_string(list.size()) + " ids exceeds the cap of " +
                                           std::to_string(kSelectionCap));
        ids.reserve(list.size());
        for (const auto& v : list) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
                return error_response(400, "ids must be non-negative integers");
            ids.push_back(v.get<std::uint64_t>());
        }
    } catch (const json::exception& e) {
        return error_response(400, std::string("malformed selection: ") + e.what());
    }
    try {
        const std::uint64_t token = selections_.register_ids(ids);
        return {200, "application/json", json{{"token", SelectionRegistry::format_token(token)}}.dump()};
    } catch (const SelectionCapError& e) {
        return error_response(413, e.what());
    }
}

ApiResponse DatasetApi::selection_flags(const std::string& token, const std::string& interval,
                                        const std::string& path)
{
    const auto parsed = SelectionRegistry::parse_token(token);
    const auto set = parsed ? selections_.find(*parsed) : nullptr;
    if (!set)
        return error_response(404, "unknown selection token " + token);
    const auto s = parse_u64(interval);
    const auto code = parse_u64(path);
    if (!s || *s >= dataset_->meta().intervals() || !code || !is_valid_path(*code))
        return error_response(404, "unknown block " + interval + "/" + path);
    const auto bytes = dataset_->block_bytes(*s, NodePath{*code});
    if (!bytes)
        return error_response(404, "no block " + path + " in interval " + interval);
    const auto mask = cosmolod::selection_flags(decode_block_ids(*bytes), *set);
    return binary_response(std::string(mask.begin(), mask.end()));
}

// ---------------------------------------------------------------------------
// StreamServer

StreamServer::StreamServer(std::shared_ptr<const Dataset> dataset, ServerOptions options)
    : api_(std::move(dataset)), options_(std::move(options)), http_(std::make_unique<httplib::Server>())
{
    install_routes();
}

StreamServer::~StreamServer() { stop(); }

void StreamServer::install_routes()
{
    auto& srv = *http_;
    const int workers = std::max(1, options_.worker_threads);
    srv.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };

    auto send = [](httplib::Response& res, const ApiResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    srv.Get("/api/meta", [this, send](const httplib::Request&, httplib::Response& res) { send(res, api_.meta()); });
    srv.Get(R"(/api/index/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_.index(req.matches[1]));
    });
    srv.Get(R"(/api/block/([^/]+)/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_.block(req.matches[1], req.matches[2]));
    });
    srv.Post("/api/resolve", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_.resolve(req.body));
    });
    srv.Post("/api/selection", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, api_.register_selection(req.body));
    });
    srv.Get(R"(/api/selection/([^/]+)/([^/]+)/([^/]+))",
            [this, send](const httplib::Request& req, httplib::Response& res) {
                send(res, api_.selection_flags(req.matches[1], req.matches[2], req.matches[3]));
            });
    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string what = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            what = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(json{{"error", what}}.dump(), "application/json");
    });
    if (!options_.web_root.empty() && !srv.set_mount_point("/", options_.web_root))
        throw std::runtime_error("cannot mount web root " + options_.web_root);
}

int StreamServer::bind()
{
    if (options_.port == 0) {
        port_ = http_->bind_to_any_port(options_.host);
    } else {
        port_ = http_->bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ < 0)
        throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    return port_;
}

int StreamServer::start()
{
    const int port = bind();
    thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    return port;
}

void StreamServer::run()
{
    bind();
    http_->listen_after_bind();
}

void StreamServer::stop()
{
    if (http_)
        http_->stop();
    if (thread_.joinable())
        thread_.join();
}

} // namespace cosmolod
