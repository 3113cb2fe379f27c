// Command-line surface: sequence generation, training, prediction,
// evaluation, layer-removal analysis and cost accounting.
//
// Exit codes: 0 success, 2 usage errors, 1 runtime errors.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "frnn/frnn.hpp"

namespace {

struct CommonArgs {
    std::string config;
    std::string data;
    std::string checkpoint;
    std::string out;
    std::size_t g = 10;
    std::size_t p = 10;
};

frnn::RunConfig load_cfg(const std::string& path) {
    frnn::RunConfig cfg = path.empty() ? frnn::RunConfig{} : frnn::load_config(path);
    if (const char* env = std::getenv("FRNN_SEED")) {
        const std::uint64_t seed = frnn::detail::parse_u64(env, "FRNN_SEED");
        cfg.train.seed = seed;
        cfg.data.seed = seed;
    }
    return cfg;
}

void attach_glyphs(frnn::RunConfig& cfg) {
    if (cfg.data.source != frnn::SpriteSource::glyphs) return;
    if (cfg.data_idx_path.empty())
        throw frnn::ConfigError("data.source = glyphs needs data.idx = <path to an IDX image file>");
    cfg.data.glyphs = std::make_shared<frnn::Tensor<float>>(frnn::load_idx(cfg.data_idx_path));
}

void check_frames_match(const frnn::SequenceBatch<float>& data, const frnn::TopologySpec& spec) {
    if (data.channels() != spec.image_channels || data.height() != spec.image_height ||
        data.width() != spec.image_width)
        throw frnn::ShapeError("sequence frames are " + std::to_string(data.channels()) + "x" +
                               std::to_string(data.height()) + "x" + std::to_string(data.width()) +
                               ", model expects " + std::to_string(spec.image_channels) + "x" +
                               std::to_string(spec.image_height) + "x" + std::to_string(spec.image_width));
}

std::string shape_of(const frnn::SequenceBatch<float>& b) { return frnn::shape_str(b.values().shape()); }

// first batch item of a [b c h w] frame, as [c h w]
frnn::Tensor<float> first_item(const frnn::Tensor<float>& frame) {
    const auto& s = frame.shape();
    frnn::Tensor<float> out({s[1], s[2], s[3]});
    auto src = frame.data();
    std::copy(src.begin(), src.begin() + out.size(), out.data().begin());
    return out;
}

void write_grid(const std::string& path, const frnn::SequenceBatch<float>& inputs,
                const frnn::SequenceBatch<float>* targets, const frnn::SequenceBatch<float>& preds) {
    std::vector<std::vector<frnn::Tensor<float>>> rows(3);
    for (std::size_t t = 0; t < inputs.time(); ++t) rows[0].push_back(first_item(inputs.frame(t)));
    if (targets)
        for (std::size_t t = 0; t < targets->time(); ++t) rows[1].push_back(first_item(targets->frame(t)));
    for (std::size_t t = 0; t < preds.time(); ++t) rows[2].push_back(first_item(preds.frame(t)));
    const std::size_t cols = std::max(inputs.time(), preds.time());
    frnn::write_pgm_grid(path, rows, cols, inputs.height(), inputs.width());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw frnn::FileError("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw frnn::FileError("write failed for '" + path + "'");
}

std::string fmt(double v, const char* spec = "%.9g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

int cmd_gen_data(const CommonArgs& a, std::size_t count, std::uint64_t seed, bool seed_set) {
    frnn::RunConfig cfg = load_cfg(a.config);
    if (seed_set) cfg.data.seed = seed;
    attach_glyphs(cfg);
    auto batch = frnn::gen_sequences(cfg.data, count);
    frnn::write_seq(a.out, batch);
    std::cout << "wrote " << shape_of(batch) << " to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string resume;
    std::string loss_log;
    std::size_t steps = 0;
    bool steps_set = false;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double learning_rate = 0;
    bool lr_set = false;
    std::size_t batch_size = 0;
    bool batch_set = false;
    bool g_set = false;
    bool p_set = false;
};

int cmd_train(const CommonArgs& a, const TrainArgs& t) {
    frnn::RunConfig cfg = load_cfg(a.config);
    if (t.g_set) cfg.train.g = a.g;
    if (t.p_set) cfg.train.p = a.p;
    if (t.steps_set) cfg.train.steps = t.steps;
    if (t.seed_set) cfg.train.seed = t.seed;
    if (t.lr_set) cfg.train.learning_rate = t.learning_rate;
    if (t.batch_set) cfg.train.batch_size = t.batch_size;
    cfg.train.validate();

    auto data = frnn::read_seq(a.data);

    frnn::FoldedStack<float> stack;
    frnn::RmsPropState<float> opt;
    std::uint64_t start = 0;
    if (!t.resume.empty()) {
        auto ck = frnn::load_checkpoint(t.resume);
        stack = std::move(ck.stack);
        opt = std::move(ck.opt);
        start = ck.step;
        cfg.train.seed = ck.seed;  // continue the checkpointed sampling stream
    } else {
        stack = frnn::init_model<float>(cfg.topology, cfg.train.seed);
        opt = frnn::init_rmsprop(stack);
    }
    check_frames_match(data, stack.spec);

    auto losses = frnn::train(stack, opt, data, cfg.train, start);
    frnn::save_checkpoint(a.out, stack, opt, cfg.train.seed, start + losses.size());

    std::string log;
    for (std::size_t i = 0; i < losses.size(); ++i)
        log += std::to_string(start + i + 1) + " " + fmt(losses[i]) + "\n";
    if (!t.loss_log.empty()) write_text(t.loss_log, log);
    std::cout << "trained " << losses.size() << " steps (" << start + 1 << ".." << start + losses.size()
              << "), final loss " << fmt(losses.back()) << "\n"
              << "checkpoint written to " << a.out << "\n";
    return 0;
}

int cmd_predict(const CommonArgs& a, const std::string& grid) {
    auto ck = frnn::load_checkpoint(a.checkpoint);
    auto data = frnn::read_seq(a.data);
    check_frames_match(data, ck.stack.spec);
    if (data.time() < a.g)
        throw frnn::ShapeError("sequence has " + std::to_string(data.time()) + " frames, need g = " +
                               std::to_string(a.g));
    auto inputs = data.window(0, a.g);
    auto preds = frnn::run_sequence(ck.stack, inputs, a.p);
    frnn::write_seq(a.out, preds);
    std::cout << "wrote " << shape_of(preds) << " to " << a.out << "\n"
              << "encoder steps " << ck.stack.counters.pre_conv_calls << ", decoder steps "
              << ck.stack.counters.post_transform_calls << "\n";
    if (!grid.empty()) {
        std::optional<frnn::SequenceBatch<float>> targets;
        if (data.time() >= a.g + a.p) targets = data.window(a.g, a.p);
        write_grid(grid, inputs, targets ? &*targets : nullptr, preds);
        std::cout << "grid written to " << grid << "\n";
    }
    return 0;
}

int cmd_evaluate(const CommonArgs& a, bool baseline, const std::string& baseline_out) {
    auto ck = frnn::load_checkpoint(a.checkpoint);
    auto data = frnn::read_seq(a.data);
    check_frames_match(data, ck.stack.spec);
    if (data.time() < a.g + a.p)
        throw frnn::ShapeError("sequence has " + std::to_string(data.time()) +
                               " frames, need g+p = " + std::to_string(a.g + a.p));
    auto inputs = data.window(0, a.g);
    auto targets = data.window(a.g, a.p);
    auto preds = frnn::run_sequence(ck.stack, inputs, a.p);
    const std::string table = frnn::report_table(frnn::evaluate(preds, targets));
    std::cout << "# model\n" << table;
    if (!a.out.empty()) write_text(a.out, table);
    if (baseline) {
        const std::string btable =
            frnn::report_table(frnn::evaluate(frnn::last_frame_baseline(inputs, a.p), targets));
        std::cout << "# baseline last-frame\n" << btable;
        if (!baseline_out.empty()) write_text(baseline_out, btable);
    }
    return 0;
}

int cmd_ablate(const CommonArgs& a, std::size_t max_remove, bool max_remove_set,
               const std::string& out_dir) {
    auto ck = frnn::load_checkpoint(a.checkpoint);
    auto data = frnn::read_seq(a.data);
    check_frames_match(data, ck.stack.spec);
    const std::size_t n = ck.stack.depth();
    if (!max_remove_set) max_remove = n;
    if (max_remove > n)
        throw frnn::ShapeError("max-remove = " + std::to_string(max_remove) + " exceeds depth " +
                               std::to_string(n));
    if (data.time() < a.g + a.p)
        throw frnn::ShapeError("sequence has " + std::to_string(data.time()) +
                               " frames, need g+p = " + std::to_string(a.g + a.p));
    std::filesystem::create_directories(out_dir);
    auto inputs = data.window(0, a.g);
    auto targets = data.window(a.g, a.p);
    for (std::size_t k = 0; k <= max_remove; ++k) {
        auto cut = frnn::truncate(ck.stack, k);
        auto preds = frnn::run_sequence(cut, inputs, a.p);
        auto rep = frnn::evaluate(preds, targets);
        const auto base = out_dir + "/ablate_k" + std::to_string(k);
        write_text(base + ".txt", frnn::report_table(rep));
        write_grid(base + ".pgm", inputs, &targets, preds);
        std::cout << "k=" << k << " layers=" << n - k << " mse " << fmt(rep.mean_mse) << " psnr "
                  << fmt(rep.mean_psnr) << " dssim " << fmt(rep.mean_dssim) << "\n";
    }
    return 0;
}

int cmd_cost(const CommonArgs& a) {
    frnn::RunConfig cfg = load_cfg(a.config);
    auto r = frnn::cost_report(cfg.topology, a.g, a.p);
    std::cout << "# layer d_in d_out kernel shared bridged ratio\n";
    for (const auto& l : r.layers) {
        const auto& spec = cfg.topology;
        std::cout << l.layer << " " << spec.state_channels(l.layer - 1) << " "
                  << spec.state_channels(l.layer) << " " << spec.bgru_layers[l.layer - 1].kernel << " "
                  << l.shared_weights << " " << l.bridged_weights << " " << fmt(l.ratio, "%.4g") << "\n";
    }
    std::cout << "weights shared " << r.folded_weights << " bridged " << r.bridged_weights << " ratio "
              << fmt(r.weight_ratio(), "%.4g") << "\n";
    std::cout << "gate-evals per sequence (g=" << a.g << ", p=" << a.p << ") folded "
              << r.folded_gate_evals << " bridged " << r.bridged_gate_evals << "\n";
    std::cout << "peak live states folded " << r.folded_peak_states << " bridged "
              << r.bridged_peak_states << " ratio " << fmt(r.state_ratio(), "%.4g") << "\n";
    std::cout << "macs per sequence folded " << r.folded_macs << " bridged " << r.bridged_macs
              << " ratio " << fmt(double(r.bridged_macs) / double(r.folded_macs), "%.4g") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // keep the large per-step activation and gradient buffers inside the
    // arena instead of cycling them through mmap/munmap
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    CLI::App app{"folded recurrent video prediction toolkit"};
    app.require_subcommand(1);

    CommonArgs a;
    std::size_t count = 0;
    std::uint64_t gen_seed = 0;
    TrainArgs t;
    std::string grid, baseline_out, out_dir;
    bool baseline = false;
    std::size_t max_remove = 0;

    auto* gen = app.add_subcommand("gen-data", "generate moving-sprite sequences");
    gen->add_option("--config", a.config, "config file");
    gen->add_option("--count", count, "number of sequences")->required();
    gen->add_option("--out", a.out, "output sequence file")->required();
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "generator seed");

    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--config", a.config, "config file");
    train->add_option("--data", a.data, "training sequence file")->required();
    auto* steps_opt = train->add_option("--steps", t.steps, "optimizer steps");
    train->add_option("--checkpoint-out", a.out, "checkpoint path")->required();
    train->add_option("--resume", t.resume, "resume from a checkpoint");
    train->add_option("--loss-log", t.loss_log, "loss log path");
    auto* tr_g = train->add_option("--g", a.g, "ground-truth frames per sample");
    auto* tr_p = train->add_option("--p", a.p, "predicted frames per sample");
    auto* tr_seed = train->add_option("--seed", t.seed, "training seed");
    auto* tr_lr = train->add_option("--learning-rate", t.learning_rate, "RMSProp learning rate");
    auto* tr_batch = train->add_option("--batch-size", t.batch_size, "batch size");

    auto* predict = app.add_subcommand("predict", "emit predictions from a checkpoint");
    predict->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required();
    predict->add_option("--data", a.data, "input sequence file")->required();
    predict->add_option("--g", a.g, "frames to encode");
    predict->add_option("--p", a.p, "frames to predict");
    predict->add_option("--out", a.out, "output sequence file")->required();
    predict->add_option("--grid", grid, "write an inputs/targets/predictions graymap grid");

    auto* evaluate = app.add_subcommand("evaluate", "score predictions against held-out frames");
    evaluate->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required();
    evaluate->add_option("--data", a.data, "evaluation sequence file")->required();
    evaluate->add_option("--g", a.g, "frames to encode");
    evaluate->add_option("--p", a.p, "frames to predict");
    evaluate->add_option("--out", a.out, "write the model metric table here");
    evaluate->add_flag("--baseline", baseline, "also score the last-frame baseline");
    evaluate->add_option("--baseline-out", baseline_out, "write the baseline table here");

    auto* ablate = app.add_subcommand("ablate", "re-predict while removing the deepest layers");
    ablate->add_option("--checkpoint", a.checkpoint, "model checkpoint")->required();
    ablate->add_option("--data", a.data, "evaluation sequence file")->required();
    auto* mr_opt = ablate->add_option("--max-remove", max_remove, "deepest layers to remove (default: all)");
    ablate->add_option("--out-dir", out_dir, "directory for per-k tables and grids")->required();
    ablate->add_option("--g", a.g, "frames to encode");
    ablate->add_option("--p", a.p, "frames to predict");

    auto* cost = app.add_subcommand("cost", "weight and step-count accounting");
    cost->add_option("--config", a.config, "config file");
    cost->add_option("--g", a.g, "encoded frames per sequence");
    cost->add_option("--p", a.p, "predicted frames per sequence");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(a, count, gen_seed, gen_seed_opt->count() > 0);
        if (train->parsed()) {
            t.steps_set = steps_opt->count() > 0;
            t.g_set = tr_g->count() > 0;
            t.p_set = tr_p->count() > 0;
            t.seed_set = tr_seed->count() > 0;
            t.lr_set = tr_lr->count() > 0;
            t.batch_set = tr_batch->count() > 0;
            return cmd_train(a, t);
        }
        if (predict->parsed()) return cmd_predict(a, grid);
        if (evaluate->parsed()) return cmd_evaluate(a, baseline, baseline_out);
        if (ablate->parsed()) return cmd_ablate(a, max_remove, mr_opt->count() > 0, out_dir);
        if (cost->parsed()) return cmd_cost(a);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
