// Command line front end: matting, toy training, evaluation and attention
// visualization over the PNG-based formats described in the README.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tilematte/data.hpp"
#include "tilematte/metrics.hpp"
#include "tilematte/network.hpp"
#include "tilematte/pipeline.hpp"
#include "tilematte/png_io.hpp"

using namespace tilematte;

namespace {

struct MatteArgs {
    std::string image, trimap, out, checkpoint;
    int patch_size = 320;
    int margin = -1; // -1 = patch_size/4
    int k = 3;
    int pool = 30;
    std::int64_t mem_budget = 512ll * 1024 * 1024;
    std::uint64_t seed = 0;
    int out_depth = 8;
};

struct TrainArgs {
    std::string data;
    int synthetic = 0;
    std::string out;
    std::string loss_log;
    int steps = 2000;
    int batch = 8;
    double lr = 5e-4;
    double weight_decay = 1e-4;
    std::uint64_t seed = 1;
    int k = 3;
    int patch_size = 320;
    std::string scales = "320,480,640";
    int canvas = 640;
    int blend_margin = -1;
    std::string variant = "context";
    std::string enc_widths = "16,24,32,40";
    int aspp_width = 16;
    bool no_aspp = false;
    std::uint64_t init_seed = 7;
};

struct EvalArgs {
    std::string data, checkpoint, report;
    int patch_size = 320;
    int margin = -1;
    int k = 3;
    int pool = 30;
    std::int64_t mem_budget = 512ll * 1024 * 1024;
};

struct VizArgs {
    std::string image, trimap, checkpoint, out_dir, pixel;
    int patch_index = 0;
    int patch_size = 320;
    int margin = -1;
    int k = 3;
    int pool = 30;
    std::int64_t mem_budget = 512ll * 1024 * 1024;
};

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, ',')) out.push_back(std::stoi(tok));
    if (out.empty()) throw std::invalid_argument("empty integer list");
    return out;
}

InferenceConfig make_inference(const Model& model, int patch, int margin, int k, int pool,
                               std::int64_t budget, std::uint64_t seed = 0) {
    InferenceConfig cfg;
    cfg.patch_side = patch;
    cfg.margin = margin >= 0 ? margin : patch / 4;
    cfg.top_k = k;
    cfg.pool_limit = pool;
    cfg.encoder_stride = model.config().stride();
    cfg.memory_budget_bytes = budget;
    cfg.seed = seed;
    return cfg;
}

int run_matte(const MatteArgs& a) {
    Model model = load_checkpoint(a.checkpoint);
    Rgb image = read_png_rgb(a.image);
    Trimap trimap = read_png_trimap(a.trimap);
    InferenceConfig cfg =
        make_inference(model, a.patch_size, a.margin, a.k, a.pool, a.mem_budget, a.seed);
    MatteStats stats;
    AlphaMatte alpha = matte_image(image, trimap, model, cfg, &stats);
    write_png_gray(a.out, alpha, a.out_depth);
    std::cout << "patches=" << stats.patch_count << " network=" << stats.network_patch_count
              << " encodes=" << stats.encode_count
              << " peak_cache_bytes=" << stats.peak_cache_bytes << '\n';
    return 0;
}

int run_train(const TrainArgs& a) {
    if (a.data.empty() == (a.synthetic == 0))
        throw std::runtime_error("train: pass exactly one of --data or --synthetic");

    NetConfig nc;
    nc.encoder_widths = parse_int_list(a.enc_widths);
    nc.aspp = !a.no_aspp;
    nc.aspp_width = a.aspp_width;
    nc.use_cross_patch = a.variant == "context";
    if (a.variant != "context" && a.variant != "baseline")
        throw std::runtime_error("train: --variant must be 'context' or 'baseline'");
    Model model(nc, a.init_seed);

    std::vector<TrainingSample> scenes;
    if (!a.data.empty()) {
        Dataset ds(a.data);
        for (size_t i = 0; i < ds.size(); ++i) scenes.push_back(ds.training_sample(i));
    } else {
        for (int i = 0; i < a.synthetic; ++i)
            scenes.push_back(synth_scene(a.seed * 1000003ull + (std::uint64_t)i, a.canvas));
    }

    TrainConfig tc;
    tc.steps = a.steps;
    tc.batch = a.batch;
    tc.lr = a.lr;
    tc.weight_decay = a.weight_decay;
    tc.seed = a.seed;
    tc.context_count = a.k;
    tc.sample.target_side = a.patch_size;
    tc.sample.scales = parse_int_list(a.scales);
    tc.blend_margin = a.blend_margin;

    std::string log = a.loss_log.empty() ? a.out + ".losses.csv" : a.loss_log;
    TrainResult r = train(scenes, model, tc, log);
    save_checkpoint(model, a.out);
    if (!r.curve.empty())
        std::cout << "final l_overall=" << r.curve.back().l_overall << " after " << a.steps
                  << " steps\n";
    std::cout << "checkpoint written to " << a.out << ", losses to " << log << '\n';
    return 0;
}

int run_eval(const EvalArgs& a) {
    Model model = load_checkpoint(a.checkpoint);
    Dataset ds(a.data);
    InferenceConfig cfg =
        make_inference(model, a.patch_size, a.margin, a.k, a.pool, a.mem_budget);
    std::vector<RunReport> reports = evaluate(ds, model, cfg);

    std::ofstream csv(a.report);
    if (!csv) throw std::runtime_error("eval: cannot write " + a.report);
    csv << "name," << metric_csv_header() << ",wall_seconds,patches\n";
    std::vector<std::pair<std::string, MetricReport>> rows;
    for (const auto& r : reports) {
        csv << r.name << ',' << metric_csv_line(r.metrics) << ',' << r.wall_seconds << ','
            << r.patch_count << '\n';
        rows.emplace_back(r.name, r.metrics);
    }
    MetricReport mean = mean_metrics(reports);
    csv << "mean," << metric_csv_line(mean) << ",,\n";
    rows.emplace_back("mean", mean);
    std::cout << metric_table(rows);
    return 0;
}

int run_viz(const VizArgs& a) {
    Model model = load_checkpoint(a.checkpoint);
    Rgb image = read_png_rgb(a.image);
    Trimap trimap = read_png_trimap(a.trimap);
    auto comma = a.pixel.find(',');
    if (comma == std::string::npos)
        throw std::runtime_error("viz-attn: --pixel expects r,c");
    int pr = std::stoi(a.pixel.substr(0, comma));
    int pc = std::stoi(a.pixel.substr(comma + 1));
    InferenceConfig cfg =
        make_inference(model, a.patch_size, a.margin, a.k, a.pool, a.mem_budget);
    visualize_attention(image, trimap, model, a.patch_index, pr, pc, cfg, a.out_dir);
    std::cout << "attention maps written to " << a.out_dir << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-based image matting engine with cross-patch context"};
    app.set_config("--config", "", "plain-text key=value config file, overridden by flags");
    app.require_subcommand(1);

    MatteArgs ma;
    CLI::App* matte = app.add_subcommand("matte", "matte one image");
    matte->add_option("--image", ma.image, "input RGB PNG")->required();
    matte->add_option("--trimap", ma.trimap, "trimap PNG (0/128/255)")->required();
    matte->add_option("--out", ma.out, "output alpha PNG")->required();
    matte->add_option("--checkpoint", ma.checkpoint, "model checkpoint")->required();
    matte->add_option("--patch-size", ma.patch_size);
    matte->add_option("--margin", ma.margin, "overlap width, default patch/4");
    matte->add_option("--k", ma.k, "context patches per query");
    matte->add_option("--pool", ma.pool, "candidate pool limit");
    matte->add_option("--mem-budget", ma.mem_budget, "feature cache budget in bytes");
    matte->add_option("--seed", ma.seed);
    matte->add_option("--out-depth", ma.out_depth)->check(CLI::IsMember({8, 16}));

    TrainArgs ta;
    CLI::App* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--data", ta.data, "dataset directory");
    tr->add_option("--synthetic", ta.synthetic, "number of synthetic scenes");
    tr->add_option("--out", ta.out, "output checkpoint")->required();
    tr->add_option("--loss-log", ta.loss_log, "loss CSV path, default <out>.losses.csv");
    tr->add_option("--steps", ta.steps);
    tr->add_option("--batch", ta.batch);
    tr->add_option("--lr", ta.lr);
    tr->add_option("--weight-decay", ta.weight_decay);
    tr->add_option("--seed", ta.seed);
    tr->add_option("--k", ta.k, "context patches per sample");
    tr->add_option("--patch-size", ta.patch_size, "network input side");
    tr->add_option("--scales", ta.scales, "comma-separated crop scales");
    tr->add_option("--canvas", ta.canvas, "synthetic scene side");
    tr->add_option("--blend-margin", ta.blend_margin, "loss-mask margin, default patch/4");
    tr->add_option("--variant", ta.variant, "context (full) or baseline (no attention)");
    tr->add_option("--enc-widths", ta.enc_widths, "encoder block widths");
    tr->add_option("--aspp-width", ta.aspp_width);
    tr->add_flag("--no-aspp", ta.no_aspp);
    tr->add_option("--init-seed", ta.init_seed, "parameter initialization seed");

    EvalArgs ea;
    CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    ev->add_option("--data", ea.data, "dataset directory")->required();
    ev->add_option("--checkpoint", ea.checkpoint)->required();
    ev->add_option("--report", ea.report, "output CSV")->required();
    ev->add_option("--patch-size", ea.patch_size);
    ev->add_option("--margin", ea.margin);
    ev->add_option("--k", ea.k);
    ev->add_option("--pool", ea.pool);
    ev->add_option("--mem-budget", ea.mem_budget);

    VizArgs va;
    CLI::App* vz = app.add_subcommand("viz-attn", "export attention heatmaps");
    vz->add_option("--image", va.image)->required();
    vz->add_option("--trimap", va.trimap)->required();
    vz->add_option("--checkpoint", va.checkpoint)->required();
    vz->add_option("--patch", va.patch_index, "query patch index in the plan")->required();
    vz->add_option("--pixel", va.pixel, "r,c inside the query patch")->required();
    vz->add_option("--out-dir", va.out_dir)->required();
    vz->add_option("--patch-size", va.patch_size);
    vz->add_option("--margin", va.margin);
    vz->add_option("--k", va.k);
    vz->add_option("--pool", va.pool);
    vz->add_option("--mem-budget", va.mem_budget);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1; // usage error
    }

    try {
        if (matte->parsed()) return run_matte(ma);
        if (tr->parsed()) return run_train(ta);
        if (ev->parsed()) return run_eval(ea);
        if (vz->parsed()) return run_viz(va);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
