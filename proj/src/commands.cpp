#include "remix/commands.hpp"

#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "remix/evalkit.hpp"
#include "remix/gradcheck.hpp"
#include "remix/trainer.hpp"

namespace remix {

namespace {

int report_error(const std::exception& e, std::ostream& err) {
    if (const auto* re = dynamic_cast<const Error*>(&e)) {
        err << "error: " << re->what() << '\n';
        return re->code() == ErrorCode::InvalidConfig ? kExitUsage : kExitRuntime;
    }
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        return report_error(e, err);
    }
}

void check_dim(const DatasetFile& file, const std::filesystem::path& path, std::size_t expected) {
    if (file.dim != expected) {
        throw Error(ErrorCode::DimensionMismatch, path.string() + " has dim " + std::to_string(file.dim) +
                                                      ", expected " + std::to_string(expected));
    }
}

}  // namespace

int cmd_generate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        const auto domains = synth_generate(cfg.generator, cfg.seed);
        const auto dim = static_cast<std::size_t>(cfg.generator.dim);
        const auto single = flatten(domains.single);
        write_dataset(cfg.io.multi_path(), dim, domains.train.samples());
        write_dataset(cfg.io.single_path(), dim, single);
        write_dataset(cfg.io.target_path(), dim, domains.target.samples());
        out << cfg.io.multi_path().string() << ": " << domains.train.samples().size() << " records\n"
            << cfg.io.single_path().string() << ": " << single.size() << " records\n"
            << cfg.io.target_path().string() << ": " << domains.target.samples().size() << " records\n";
        return static_cast<int>(kExitOk);
    });
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        const auto multi_file = read_dataset(cfg.io.multi_path());
        const auto multi = MultiCamDataset::build(multi_file.samples);
        SingleCamCorpus corpus;
        if (cfg.train.single_cam_active()) {
            const auto single_file = read_dataset(cfg.io.single_path());
            check_dim(single_file, cfg.io.single_path(), multi_file.dim);
            corpus = SingleCamCorpus::build(single_file.samples);
        }

        TrainConfig tc = cfg.train;
        tc.workers = cfg.io.workers;
        CheckpointOptions ckpt{cfg.io.checkpoint, config_to_json(cfg)};
        const auto result = train(multi, corpus, cfg.model, tc, cfg.seed, ckpt);
        write_metrics_log(cfg.io.metrics, result.metrics);

        out << std::fixed << std::setprecision(4);
        for (const auto& m : result.metrics) {
            out << "epoch " << m.epoch << "  loss " << m.loss_total << "  ins " << m.loss_ins << "  aug "
                << m.loss_aug << "  cen " << m.loss_cen << "  cc " << m.loss_cc << "  clusters "
                << m.pseudo_clusters;
            if (m.purity) out << "  purity " << *m.purity;
            out << '\n';
        }
        out << "checkpoint: " << cfg.io.checkpoint << "\nmetrics: " << cfg.io.metrics << '\n';
        return static_cast<int>(kExitOk);
    });
}

int cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& out,
             std::ostream& err) {
    return guarded(err, [&] {
        cfg.validate();
        const auto ck = load_checkpoint(checkpoint);
        const auto target_file = read_dataset(cfg.io.target_path());
        check_dim(target_file, cfg.io.target_path(), ck.momentum.input_dim());
        const auto target = MultiCamDataset::build(target_file.samples);
        const auto report = evaluate(ck.momentum, target, cfg.io.workers);
        write_report(cfg.eval.report, report);
        out << std::fixed << std::setprecision(2) << "rank1 " << 100.0 * report.rank1 << "  rank5 "
            << 100.0 * report.rank5 << "  rank10 " << 100.0 * report.rank10 << "  mAP " << 100.0 * report.mAP
            << "  (" << report.n_query << " queries, " << report.n_gallery << " gallery)\n"
            << "report: " << cfg.eval.report << '\n';
        return static_cast<int>(kExitOk);
    });
}

int cmd_gradcheck(std::uint64_t seed, bool corrupt_gradient, std::ostream& out) {
    GradcheckOptions opt;
    opt.seed = seed;
    opt.corrupt_gradient = corrupt_gradient;
    const auto lines = run_gradcheck(opt);
    bool ok = true;
    out << std::scientific << std::setprecision(3);
    for (const auto& l : lines) {
        out << (l.pass ? "PASS " : "FAIL ") << std::left << std::setw(18) << l.loss << " max_rel_err "
            << l.max_relative_error << '\n';
        ok = ok && l.pass;
    }
    return ok ? kExitOk : kExitCheckFailed;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Joint multi-camera and single-camera re-identification training at desk scale"};
    app.require_subcommand(1);
    app.footer("Config keys (JSON file sections; override with --set section.key=value):\n" + config_help());

    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_path;
    std::string checkpoint_path;
    std::optional<std::uint64_t> seed;
    bool corrupt = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run config");
        sub->add_option("--set", overrides, "override a config key, e.g. train.gamma=0 (repeatable)");
        sub->add_option("--seed", seed, "override the root seed");
    };
    auto* gen = app.add_subcommand("generate", "write the synthetic datasets");
    add_common(gen);
    gen->add_option("--out", out_path, "dataset directory (io.data_dir)");
    auto* trn = app.add_subcommand("train", "train and write checkpoint and metrics log");
    add_common(trn);
    trn->add_option("--out", out_path, "output directory for checkpoint.json and metrics.jsonl");
    trn->add_option("--checkpoint", checkpoint_path, "checkpoint path (io.checkpoint)");
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint's momentum encoder on the target domain");
    add_common(ev);
    ev->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate (default io.checkpoint)");
    ev->add_option("--out", out_path, "report path (eval.report)");
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all loss gradients");
    gc->add_option("--seed", seed, "random seed");
    gc->add_flag("--corrupt-gradient", corrupt)->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    if (gc->parsed()) return cmd_gradcheck(seed.value_or(0), corrupt, out);

    RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const auto& o : overrides) apply_override(cfg, o);
        if (seed) cfg.seed = *seed;
        if (gen->parsed() && !out_path.empty()) cfg.io.data_dir = out_path;
        if (trn->parsed()) {
            if (!out_path.empty()) {
                cfg.io.checkpoint = (std::filesystem::path(out_path) / "checkpoint.json").string();
                cfg.io.metrics = (std::filesystem::path(out_path) / "metrics.jsonl").string();
            }
            if (!checkpoint_path.empty()) cfg.io.checkpoint = checkpoint_path;
        }
        if (ev->parsed() && !out_path.empty()) cfg.eval.report = out_path;
        cfg.train.workers = cfg.io.workers;
        cfg.validate();
    } catch (const std::exception& e) {
        report_error(e, err);
        return kExitUsage;
    }

    if (gen->parsed()) return cmd_generate(cfg, out, err);
    if (trn->parsed()) return cmd_train(cfg, out, err);
    return cmd_eval(cfg, checkpoint_path.empty() ? cfg.io.checkpoint : checkpoint_path, out, err);
}

}  // namespace remix
