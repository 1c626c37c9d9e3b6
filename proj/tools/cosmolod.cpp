// cosmolod command-line driver: gen, build, render, psnr, serve.

#include "cosmolod/builder.hpp"
#include "cosmolod/cut.hpp"
#include "cosmolod/dataset.hpp"
#include "cosmolod/render.hpp"
#include "cosmolod/server.hpp"
#include "cosmolod/snapshot.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace cosmolod;

namespace {

std::string read_text(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> snapshot_files(const std::string& dir)
{
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".cpt")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

std::string snapshot_name(std::size_t s)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "snap_%03zu.cpt", s);
    return buf;
}

int run_gen(const SynthConfig& cfg, const std::string& out, unsigned threads)
{
    fs::create_directories(out);
    const auto tables = gen_synthetic(cfg, threads);
    nlohmann::json times = nlohmann::json::array();
    std::size_t bytes = 0;
    for (std::size_t s = 0; s < tables.size(); ++s) {
        bytes += write_table(tables[s], (fs::path(out) / snapshot_name(s)).string());
        times.push_back(tables[s].snapshot_time);
    }
    std::ofstream(fs::path(out) / "times.json") << times.dump() << "\n";
    std::cout << "wrote " << tables.size() << " snapshots of " << cfg.n_points << " particles (" << bytes
              << " bytes) to " << out << "\n";
    return 0;
}

int run_build(const std::string& in, const std::string& out, const BuildConfig& cfg)
{
    const auto files = snapshot_files(in);
    if (files.size() < 2)
        throw std::runtime_error("need at least two .cpt snapshots in " + in);
    const auto t0 = std::chrono::steady_clock::now();
    const BuildSummary summary = build(files, cfg, out);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "intervals:        " << summary.intervals << "\n"
              << "nodes:            " << summary.nodes << "\n"
              << "bytes written:    " << summary.bytes_written << "\n"
              << "clamped coords:   " << summary.clamped << "\n"
              << "missing pairs:    " << summary.missing_pairs << "\n"
              << "overfull leaves:  " << summary.overfull_leaves << "\n"
              << "depth histogram: ";
    for (std::size_t d = 0; d < summary.depth_histogram.size(); ++d)
        if (summary.depth_histogram[d])
            std::cout << " " << d << ":" << summary.depth_histogram[d];
    std::cout << "\nelapsed:          " << secs << " s\n";
    if (summary.overfull_leaves)
        std::cerr << "warning: " << summary.overfull_leaves
                  << " max-depth leaves exceed the node capacity\n";
    return 0;
}

struct RenderArgs {
    std::string dataset, camera, out, raw;
    double t = 0.0;
    bool full = false;
    double tau = 2.0;
    std::uint64_t budget = 200000;
};

int run_render(const RenderArgs& a)
{
    const Dataset dataset(a.dataset);
    const Camera cam = Camera::from_json(read_text(a.camera));
    const std::size_t s = dataset.meta().interval_for_time(a.t);
    Image image;
    std::string what;
    if (!a.raw.empty()) {
        const auto files = snapshot_files(a.raw);
        if (files.size() != dataset.meta().snapshot_times.size())
            throw std::runtime_error(a.raw + " does not hold the dataset's snapshots");
        const auto start = read_table(files[s]);
        const auto end = read_table(files[s + 1]);
        image = render_reference(splat_points(start, end, dataset.meta().density_exponent), cam,
                                 dataset.meta().interval_alpha(s, a.t));
        what = std::to_string(start.count()) + " raw points";
    } else {
        const Cut cut = a.full ? all_leaves_cut(dataset.index(s), static_cast<std::uint32_t>(s))
                               : select_cut(dataset.index(s), dataset.meta().root, static_cast<std::uint32_t>(s),
                                            cam, a.tau, a.budget);
        image = render_cut(dataset, cut, cam, a.t);
        what = std::to_string(cut.total_points) + " points in " + std::to_string(cut.entries.size()) + " blocks" +
               (cut.budget_exceeded ? " (budget exceeded)" : "");
    }
    write_pfm(image, a.out);
    const auto preview = fs::path(a.out).replace_extension(".ppm").string();
    write_ppm_preview(image, preview);
    std::cout << "rendered " << what << " -> " << a.out << " (+ " << preview << ")\n";
    return 0;
}

int run_psnr(const std::string& a, const std::string& b)
{
    const double db = image_psnr(read_pfm(a), read_pfm(b));
    std::cout << db << "\n";
    return 0;
}

int run_serve(const std::string& dataset_dir, const std::string& addr, const std::string& web_root)
{
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos)
        throw std::runtime_error("--addr must be HOST:PORT");
    ServerOptions opts;
    opts.host = addr.substr(0, colon);
    opts.port = std::stoi(addr.substr(colon + 1));
    opts.web_root = web_root;
    auto dataset = std::make_shared<const Dataset>(dataset_dir);
    StreamServer server(dataset, opts);
    std::cout << "serving " << dataset_dir << " on " << addr << "\n" << std::flush;
    server.run();
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Octree level-of-detail pipeline for particle snapshots"};
    app.require_subcommand(1);

    SynthConfig synth;
    std::string gen_out;
    unsigned gen_threads = 1;
    auto* gen = app.add_subcommand("gen", "Generate synthetic clustered snapshots");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--points", synth.n_points, "Particles per snapshot")->capture_default_str();
    gen->add_option("--clusters", synth.n_clusters, "Number of Plummer clusters")->capture_default_str();
    gen->add_option("--snapshots", synth.n_snapshots, "Number of snapshots")->capture_default_str();
    gen->add_option("--box", synth.box_size, "Edge of the cube holding cluster centers")->capture_default_str();
    gen->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
    gen->add_option("--plummer-scale", synth.plummer_scale, "Plummer scale radius")->capture_default_str();
    gen->add_option("--drift", synth.drift_speed, "Cluster drift speed per time unit")->capture_default_str();
    gen->add_option("--neighbors", synth.neighbors, "k for the k-NN density estimate")->capture_default_str();
    gen->add_option("--threads", gen_threads, "Worker threads")->capture_default_str();

    BuildConfig bcfg;
    std::string build_in, build_out;
    auto* bld = app.add_subcommand("build", "Build the LOD dataset from snapshots");
    bld->add_option("--in", build_in, "Directory of .cpt snapshots")->required();
    bld->add_option("--out", build_out, "Dataset output directory")->required();
    bld->add_option("--node-capacity", bcfg.node_capacity, "Maximum points per block")->capture_default_str();
    bld->add_option("--alpha", bcfg.density_exponent, "Density exponent of the sampling weight")
        ->capture_default_str();
    bld->add_option("--seed", bcfg.seed, "Subselection seed")->capture_default_str();
    bld->add_option("--max-depth", bcfg.max_depth, "Maximum octree depth")->capture_default_str();
    bld->add_option("--threads", bcfg.threads, "Worker threads")->capture_default_str();

    RenderArgs ra;
    auto* ren = app.add_subcommand("render", "Render a frame with the CPU reference splatter");
    ren->add_option("--dataset", ra.dataset, "Dataset directory")->required();
    ren->add_option("--camera", ra.camera, "Camera JSON file")->required();
    ren->add_option("--t", ra.t, "Simulation time")->required();
    ren->add_option("--out", ra.out, "Output PFM path")->required();
    auto* full = ren->add_flag("--full", ra.full, "Render every leaf block");
    ren->add_option("--tau", ra.tau, "Screen-space error threshold in pixels")->excludes(full)->capture_default_str();
    ren->add_option("--budget", ra.budget, "Point budget")->excludes(full)->capture_default_str();
    ren->add_option("--raw", ra.raw, "Render the original snapshots from this directory instead");

    std::string psnr_a, psnr_b;
    auto* psnr = app.add_subcommand("psnr", "PSNR of B against reference A, in dB");
    psnr->add_option("A", psnr_a, "Reference PFM")->required();
    psnr->add_option("B", psnr_b, "Test PFM")->required();

    std::string serve_dataset, serve_addr = "127.0.0.1:8080", web_root;
    auto* srv = app.add_subcommand("serve", "Serve a dataset over HTTP");
    srv->add_option("--dataset", serve_dataset, "Dataset directory")->required();
    srv->add_option("--addr", serve_addr, "HOST:PORT")->capture_default_str();
    srv->add_option("--web-root", web_root, "Static viewer files to mount at /");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen)
            return run_gen(synth, gen_out, gen_threads);
        if (*bld)
            return run_build(build_in, build_out, bcfg);
        if (*ren)
            return run_render(ra);
        if (*psnr)
            return run_psnr(psnr_a, psnr_b);
        if (*srv)
            return run_serve(serve_dataset, serve_addr, web_root);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
