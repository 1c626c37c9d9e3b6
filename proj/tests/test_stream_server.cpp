#include "cosmolod/builder.hpp"
#include "cosmolod/cut.hpp"
#include "cosmolod/server.hpp"

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "test_support.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

using namespace cosmolod;
using nlohmann::json;

namespace {

struct Served {
    test::TempDir dir{"server"};
    std::shared_ptr<const Dataset> dataset;

    Served()
    {
        SynthConfig sc;
        sc.n_points = 15000;
        sc.n_snapshots = 3;
        sc.seed = 77;
        const auto tables = gen_synthetic(sc);
        BuildConfig cfg;
        cfg.node_capacity = 500;
        build(std::span<const ParticleTable>(tables), cfg, dir.str());
        dataset = std::make_shared<const Dataset>(dir.str());
    }
};

Served& served()
{
    static Served s;
    return s;
}

std::string file_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string on_disk_block(const Dataset& ds, std::size_t s, const IndexEntry& e)
{
    const std::string all = file_text(ds.blocks_path(s));
    return all.substr(e.offset, e.length);
}

Camera random_camera(std::mt19937_64& rng, const Aabb& box)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Camera cam;
    cam.width = 800;
    cam.height = 600;
    cam.position = box.center() + box.sizes().maxCoeff() * 2.0 * Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5);
    cam.look_at = box.min() + box.sizes().cwiseProduct(Vec3(u(rng), u(rng), u(rng)));
    cam.up = Vec3(0.1, 1, 0.2);
    return cam;
}

std::string resolve_body(std::size_t s, const Camera& cam, double tau, std::uint64_t budget)
{
    json j;
    j["interval"] = s;
    j["camera"] = json::parse(cam.to_json());
    j["tau"] = tau;
    j["budget"] = budget;
    return j.dump();
}

} // namespace

TEST_CASE("api: meta, index and block pass-through")
{
    DatasetApi api(served().dataset);
    const Dataset& ds = *served().dataset;

    const ApiResponse meta = api.meta();
    CHECK(meta.status == 200);
    CHECK(meta.body == file_text(served().dir / "meta.json"));

    const ApiResponse index = api.index("1");
    CHECK(index.status == 200);
    CHECK(index.content_type == "application/octet-stream");
    CHECK(index.body == file_text(ds.index_path(1)));
    CHECK(api.index("2").status == 404);
    CHECK(api.index("x").status == 404);

    const ApiResponse root = api.block("0", "1");
    CHECK(root.status == 200);
    CHECK(root.body == on_disk_block(ds, 0, ds.index(0).root()));
    const auto bytes = std::as_bytes(std::span(root.body.data(), root.body.size()));
    CHECK(decode_block(bytes).path == NodePath::root());

    CHECK(api.block("0", "999999").status == 404);
    CHECK(api.block("0", "2").status == 404);
    CHECK(api.block("9", "1").status == 404);
    CHECK(api.block("0", "-1").status == 404);
}

TEST_CASE("api: resolve")
{
    DatasetApi api(served().dataset);
    const Dataset& ds = *served().dataset;
    const Aabb& root = ds.meta().root;
    std::mt19937_64 rng(12);

    Camera cam = random_camera(rng, root);
    const ApiResponse coarse = api.resolve(resolve_body(0, cam, 1e9, 200000));
    REQUIRE(coarse.status == 200);
    const json j = json::parse(coarse.body);
    REQUIRE(j["blocks"].size() == 1);
    CHECK(j["blocks"][0]["path"] == 1);

    const ApiResponse starved = api.resolve(resolve_body(0, cam, 2.0, 3));
    CHECK(json::parse(starved.body)["budget_exceeded"] == true);
    CHECK(json::parse(starved.body)["blocks"].size() == 1);

    for (int trial = 0; trial < 100; ++trial) {
        cam = random_camera(rng, root);
        const std::size_t s = trial % 2;
        const double tau = 0.5 + trial % 5;
        const ApiResponse r = api.resolve(resolve_body(s, cam, tau, 4000));
        REQUIRE(r.status == 200);
        const Cut local = select_cut(ds.index(s), root, std::uint32_t(s), cam, tau, 4000);
        REQUIRE(r.body == cut_to_json(local, ds.index(s)));
    }

    // Defaults for tau and budget.
    json partial;
    partial["interval"] = 0;
    partial["camera"] = json::parse(cam.to_json());
    CHECK(api.resolve(partial.dump()).body ==
          cut_to_json(select_cut(ds.index(0), root, 0, cam, 2.0, 200000), ds.index(0)));

    CHECK(api.resolve("{").status == 400);
    CHECK(api.resolve(R"({"interval":0})").status == 400);
    CHECK(api.resolve(R"({"interval":0,"camera":{"position":[0,0,0],"look_at":[0,0,0]}})").status == 400);
    CHECK(api.resolve(resolve_body(0, cam, -1.0, 10)).status == 400);
    CHECK(api.resolve(resolve_body(2, cam, 2.0, 10)).status == 404);
}

TEST_CASE("api: selection registration and flags")
{
    DatasetApi api(served().dataset);
    const Dataset& ds = *served().dataset;

    const ApiResponse reg = api.register_selection(R"({"ids":[9,5,9]})");
    REQUIRE(reg.status == 200);
    const std::string token = json::parse(reg.body)["token"];
    CHECK(token.size() == 16);
    const auto set = api.selections().find(*SelectionRegistry::parse_token(token));
    REQUIRE(set);
    CHECK(set->ids() == std::vector<std::uint64_t>{5, 9});
    CHECK(selection_flags(std::vector<std::uint64_t>{5, 9, 12}, *set) == std::vector<std::uint8_t>{0b011});

    // Flags for a real block against a brute-force oracle.
    const IndexEntry& e = ds.index(1).entries[3];
    const Block block = ds.read_block(1, NodePath{e.path});
    std::vector<std::uint64_t> chosen{block.id[0], block.id[5], block.id.back(), 123456789};
    json body;
    body["ids"] = chosen;
    const std::string tok = json::parse(api.register_selection(body.dump()).body)["token"];
    const ApiResponse flags = api.selection_flags(tok, "1", std::to_string(e.path));
    REQUIRE(flags.status == 200);
    REQUIRE(flags.body.size() == (block.count() + 7) / 8);
    for (std::size_t i = 0; i < block.count(); ++i) {
        const bool member = std::find(chosen.begin(), chosen.end(), block.id[i]) != chosen.end();
        CHECK(bool((std::uint8_t(flags.body[i / 8]) >> (i % 8)) & 1) == member);
    }

    CHECK(api.selection_flags("0123456789abcdef", "1", "1").status == 404);
    CHECK(api.selection_flags("zz", "1", "1").status == 404);
    CHECK(api.selection_flags(tok, "1", "999999").status == 404);
    CHECK(api.selection_flags(tok, "7", "1").status == 404);
    CHECK(api.register_selection(R"({"ids":"no"})").status == 400);
    CHECK(api.register_selection(R"({"ids":[-1]})").status == 400);
    CHECK(api.register_selection("nope").status == 400);
}

TEST_CASE("api: selection cap")
{
    DatasetApi api(served().dataset);
    std::string at_cap = R"({"ids":[)";
    for (std::size_t i = 0; i < kSelectionCap; ++i) {
        at_cap += std::to_string(i);
        at_cap += ',';
    }
    std::string over = at_cap + "4294967296]}";
    at_cap.back() = ']';
    at_cap += '}';
    CHECK(api.register_selection(at_cap).status == 200);
    CHECK(api.register_selection(over).status == 413);
}

TEST_CASE("selection registry keeps sixteen tokens")
{
    SelectionRegistry reg;
    std::vector<std::uint64_t> tokens;
    const std::vector<std::uint64_t> ids{1};
    for (int i = 0; i < 17; ++i)
        tokens.push_back(reg.register_ids(ids));
    CHECK(reg.size() == 16);
    CHECK(reg.find(tokens[0]) == nullptr);
    CHECK(reg.find(tokens[1]) != nullptr);
    // Touching token 1 protects it from the next eviction.
    reg.register_ids(ids);
    CHECK(reg.find(tokens[1]) != nullptr);
    CHECK(reg.find(tokens[2]) == nullptr);
    std::sort(tokens.begin(), tokens.end());
    CHECK(std::adjacent_find(tokens.begin(), tokens.end()) == tokens.end());

    CHECK(SelectionRegistry::parse_token(SelectionRegistry::format_token(0xdeadbeef12345678ull)) ==
          0xdeadbeef12345678ull);
    CHECK_FALSE(SelectionRegistry::parse_token("12345").has_value());
}

TEST_CASE("http server end to end")
{
    const Dataset& ds = *served().dataset;
    ServerOptions opts;
    opts.port = 0;
    StreamServer server(served().dataset, opts);
    const int port = server.start();
    REQUIRE(port > 0);

    httplib::Client cli("127.0.0.1", port);
    auto meta = cli.Get("/api/meta");
    REQUIRE(meta);
    CHECK(meta->status == 200);
    CHECK(meta->body == ds.meta_text());
    CHECK(meta->get_header_value("Content-Type") == "application/json");

    auto root = cli.Get("/api/block/0/1");
    REQUIRE(root);
    CHECK(root->status == 200);
    CHECK(root->body == on_disk_block(ds, 0, ds.index(0).root()));
    CHECK_NOTHROW(decode_block(std::as_bytes(std::span(root->body.data(), root->body.size()))));
    CHECK(cli.Get("/api/block/0/999999")->status == 404);
    CHECK(cli.Get("/api/index/0")->body == file_text(ds.index_path(0)));
    CHECK(cli.Get("/api/nothing")->status == 404);

    Camera cam;
    cam.position = ds.meta().root.center() + Vec3(0, 0, 2 * ds.meta().root.sizes().z());
    cam.look_at = ds.meta().root.center();
    auto resolved = cli.Post("/api/resolve", resolve_body(1, cam, 2.0, 3000), "application/json");
    REQUIRE(resolved);
    CHECK(resolved->status == 200);
    CHECK(resolved->body ==
          cut_to_json(select_cut(ds.index(1), ds.meta().root, 1, cam, 2.0, 3000), ds.index(1)));
    CHECK(cli.Post("/api/resolve", "{bad", "application/json")->status == 400);

    auto reg = cli.Post("/api/selection", R"({"ids":[9,5,9]})", "application/json");
    REQUIRE(reg);
    CHECK(reg->status == 200);
    const std::string token = json::parse(reg->body)["token"];
    auto flags = cli.Get("/api/selection/" + token + "/0/1");
    REQUIRE(flags);
    CHECK(flags->status == 200);
    CHECK(flags->body.size() == (ds.index(0).root().count + 7) / 8);
    CHECK(cli.Get("/api/selection/ffffffffffffffff/0/1")->status == 404);

    // 32 clients fetching overlapping block sets.
    const auto& entries = ds.index(0).entries;
    const std::string all = file_text(ds.blocks_path(0));
    std::atomic<int> mismatches{0}, fetched{0};
    std::vector<std::thread> clients;
    for (int c = 0; c < 32; ++c)
        clients.emplace_back([&, c] {
            httplib::Client client("127.0.0.1", port);
            for (std::size_t k = 0; k < 40; ++k) {
                const IndexEntry& e = entries[(std::size_t(c) * 7 + k * 3) % entries.size()];
                auto res = client.Get("/api/block/0/" + std::to_string(e.path));
                if (!res || res->status != 200 || res->body != all.substr(e.offset, e.length))
                    ++mismatches;
                ++fetched;
            }
        });
    for (auto& t : clients)
        t.join();
    CHECK(fetched == 32 * 40);
    CHECK(mismatches == 0);
    server.stop();
}

TEST_CASE("static web root is mounted")
{
    test::TempDir web("webroot");
    std::ofstream(web / "index.html") << "<html>viewer</html>";
    ServerOptions opts;
    opts.port = 0;
    opts.web_root = web.str();
    StreamServer server(served().dataset, opts);
    httplib::Client cli("127.0.0.1", server.start());
    auto res = cli.Get("/index.html");
    REQUIRE(res);
    CHECK(res->body == "<html>viewer</html>");
    CHECK(cli.Get("/api/meta")->status == 200);
}
