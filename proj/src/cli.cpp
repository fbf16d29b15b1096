#include "fsuda/cli.hpp"

#include "fsuda/checkpoint.hpp"
#include "fsuda/evaluate.hpp"
#include "fsuda/fingerprint.hpp"
#include "fsuda/synthetic.hpp"
#include "fsuda/trainer.hpp"
#include "fsuda/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

namespace fsuda {

namespace {

template <typename T>
std::string to_text(const T& v) {
    std::ostringstream os;
    if constexpr (std::is_floating_point_v<T>) os << std::setprecision(17);
    if constexpr (std::is_same_v<T, bool>) os << (v ? "true" : "false");
    else os << v;
    return os.str();
}

// Registers options on one subcommand and remembers how to print the
// effective value of every option that shapes the computation.
class Flags {
public:
    Flags(CLI::App& parent, const std::string& name, const std::string& help)
        : app_(parent.add_subcommand(name, help)), name_(name) {}

    template <typename T>
    CLI::Option* option(const std::string& names, T& var, const std::string& help) {
        CLI::Option* o = app_->add_option(names, var, help)->capture_default_str();
        values_.emplace_back(o->get_name(), [&var] { return to_text(var); });
        return o;
    }
    CLI::Option* flag(const std::string& names, bool& var, const std::string& help) {
        CLI::Option* o = app_->add_flag(names, var, help);
        values_.emplace_back(o->get_name(), [&var] { return to_text(var); });
        return o;
    }
    /// Output locations do not enter the fingerprint.
    CLI::Option* output(const std::string& names, std::string& var, const std::string& help) {
        return app_->add_option(names, var, help);
    }

    std::map<std::string, std::string> settings() const {
        std::map<std::string, std::string> m{{"command", name_}};
        for (const auto& [k, get] : values_) m[k] = get();
        return m;
    }
    std::string fingerprint() const { return config_fingerprint(settings()); }
    CLI::App* app() const { return app_; }

private:
    CLI::App* app_;
    std::string name_;
    std::vector<std::pair<std::string, std::function<std::string()>>> values_;
};

std::string settings_json(const Flags& flags) {
    nlohmann::ordered_json j;
    j["fingerprint"] = flags.fingerprint();
    j["settings"] = flags.settings();
    return j.dump(2) + "\n";
}

struct TaskFlags {
    Index ways = 5, shots = 1, queries = 15, target_queries = -1;
    Index top_k = 3;

    void add(Flags& f) {
        f.option("-N,--ways", ways, "Classes per episode")->check(CLI::PositiveNumber);
        f.option("-K,--shots", shots, "Labeled support images per class")->check(CLI::PositiveNumber);
        f.option("--nq,--queries", queries, "Source queries per class")->check(CLI::PositiveNumber);
        f.option("--target-queries", target_queries, "Target queries per episode; -1 means N*nq");
        f.option("--top-k", top_k, "Similarities kept per query descriptor and class")->check(CLI::PositiveNumber);
    }
    EpisodeSpec episode() const { return {ways, shots, queries, target_queries}; }
};

struct ModelFlags {
    Index blocks = 3, channels = 32;

    void add(Flags& f) {
        f.option("--blocks", blocks, "Convolution blocks of the embedding");
        f.option("--channels", channels, "Embedding channels");
    }
    EmbeddingConfig config(const Dataset& data) const {
        EmbeddingConfig c;
        c.in_height = data.height();
        c.in_width = data.width();
        c.in_channels = data.channels();
        c.blocks = blocks;
        c.channels = channels;
        c.validate();
        return c;
    }
};

void check_precision(const std::string& p) {
    if (p != "float" && p != "double") throw CLI::ValidationError("--precision", "must be float or double");
}

template <typename S>
void load_into(const std::string& path, Embedding<S>* net, Discriminator<S>* disc) {
    const std::vector<NamedTensor> entries = load_checkpoint(path);
    std::size_t assigned = 0;
    if (net) assigned += assign_parameters(net->parameters(), entries);
    if (disc) assigned += assign_parameters(disc->parameters(), entries);
    if (assigned == 0) throw std::runtime_error(path + " holds no matching parameters");
}

struct TrainFlags {
    std::string data, out, metrics, init, checkpoint_dir, select = "final", precision = "float";
    TaskFlags task;
    ModelFlags model;
    long episodes = 2000, halve_every = 1000, checkpoint_every = 0, val_every = 500;
    Index val_tasks = 100;
    double lr = 1e-4, lambda_spa = 0.1, lambda_adv = 0.05, lambda_msm = 0.1;
    Index msm_k = 3, msm_n = 10;
    std::uint64_t seed = 1;
    bool pretrain = false, alternating = false;
    Index pretrain_epochs = PretrainConfig{}.epochs;

    TrainConfig config(const Dataset& data, const std::string& fingerprint) const {
        TrainConfig c;
        c.episode = task.episode();
        c.episodes = episodes;
        c.lr = lr;
        c.halve_every = halve_every;
        c.objective.weights = {lambda_spa, lambda_adv, lambda_msm};
        c.objective.encoder.top_k = task.top_k;
        c.objective.msm = {msm_k, msm_n};
        c.embedding = model.config(data);
        c.seed = seed;
        c.pretrain = pretrain;
        c.pretrain_config.epochs = pretrain_epochs;
        c.alternating = alternating;
        c.select_best_val = select == "best-val";
        c.val_every = val_every;
        c.val_tasks = val_tasks;
        c.checkpoint_every = checkpoint_every;
        c.checkpoint_dir = checkpoint_dir;
        c.fingerprint = fingerprint;
        return c;
    }
};

template <typename S>
int run_train(const TrainFlags& f, const Flags& flags) {
    const Dataset data = load_dataset(f.data);
    const TrainConfig config = f.config(data, flags.fingerprint());
    config.validate();
    TrainedModel<S> model = initial_model<S>(config);
    if (!f.init.empty()) load_into<S>(f.init, model.net.get(), model.disc.get());

    std::ofstream metrics;
    if (!f.metrics.empty()) {
        metrics.open(f.metrics, std::ios::binary | std::ios::trunc);
        if (!metrics) throw std::runtime_error("cannot write " + f.metrics);
    }
    train_model(model, data, config, [&](const EpisodeMetrics& m) {
        if (metrics) metrics << m.to_json_line(config.fingerprint) << '\n';
        if ((m.episode + 1) % 100 == 0)
            std::cerr << "episode " << m.episode + 1 << " l_cls " << m.l_cls << " total " << m.total << '\n';
    });
    save_checkpoint<S>(f.out, {&model.net->parameters(), &model.disc->parameters()});
    write_file_atomic(f.out + ".json", settings_json(flags));
    std::cout << "wrote " << f.out << " (fingerprint " << config.fingerprint << ")\n";
    return 0;
}

struct EvalFlags {
    std::string data, checkpoint, out, split = "test", precision = "float";
    TaskFlags task;
    ModelFlags model;
    Index tasks = 300;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

template <typename S>
int run_eval(const EvalFlags& f, const Flags& flags) {
    const Dataset data = load_dataset(f.data);
    EmbeddingConfig ec;
    if (!f.checkpoint.empty()) {
        ec = infer_embedding_config(load_checkpoint(f.checkpoint), data.height(), data.width());
    } else {
        ec = f.model.config(data);
        ec.seed = derive_seed({f.seed, 0xF0ULL});
    }
    Embedding<S> net(ec);
    if (!f.checkpoint.empty()) load_into<S>(f.checkpoint, &net, nullptr);

    EvalConfig config;
    config.episode = f.task.episode();
    config.tasks = f.tasks;
    config.split = parse_split(f.split);
    config.seed = f.seed;
    config.encoder.top_k = f.task.top_k;
    config.threads = f.threads;
    config.fingerprint = flags.fingerprint();
    const EvalReport report = evaluate(data, net, config, data.classes(Split::kTrain));
    if (!f.out.empty()) write_file_atomic(f.out, report.to_json());
    std::cout << std::fixed << std::setprecision(2) << "accuracy " << report.mean << " +- " << report.ci95 << " over "
              << report.tasks << " tasks (fingerprint " << report.fingerprint << ")\n";
    return 0;
}

struct PretrainFlags {
    std::string data, out, precision = "float";
    ModelFlags model;
    PretrainConfig config;
};

template <typename S>
int run_pretrain(const PretrainFlags& f, const Flags& flags) {
    const Dataset data = load_dataset(f.data);
    EmbeddingConfig ec = f.model.config(data);
    ec.seed = derive_seed({f.config.seed, 0xF0ULL});
    Embedding<S> net(ec);
    const auto& classes = data.classes(Split::kTrain);
    std::vector<ImageRef> refs;
    std::vector<Index> labels;
    for (std::size_t c = 0; c < classes.size(); ++c)
        for (Index s = 0; s < data.samples(classes[c], Domain::kSource); ++s) {
            refs.push_back({classes[c], s, Domain::kSource});
            labels.push_back(static_cast<Index>(c));
        }
    const auto losses = pretrain(net, data.gather<S>(std::span<const ImageRef>(refs)), labels,
                                 static_cast<Index>(classes.size()), f.config);
    for (std::size_t e = 0; e < losses.size(); ++e) std::cerr << "epoch " << e + 1 << " loss " << losses[e] << '\n';
    save_checkpoint<S>(f.out, {&net.parameters()});
    write_file_atomic(f.out + ".json", settings_json(flags));
    std::cout << "wrote " << f.out << " (fingerprint " << flags.fingerprint() << ")\n";
    return 0;
}

int report_suite(const std::vector<CheckResult>& results, const std::string& out, const Flags& flags) {
    std::cout << format_results(results);
    const bool ok = all_passed(results);
    std::cout << (ok ? "all checks passed" : "some checks FAILED") << " (fingerprint " << flags.fingerprint() << ")\n";
    if (!out.empty()) {
        nlohmann::ordered_json j;
        j["fingerprint"] = flags.fingerprint();
        j["passed"] = ok;
        for (const auto& r : results)
            j["checks"].push_back({{"name", r.name}, {"pass", r.pass}, {"value", r.value}, {"tolerance", r.tolerance}});
        write_file_atomic(out, j.dump(2) + "\n");
    }
    return ok ? 0 : 1;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Few-shot unsupervised domain adaptation with image-to-class similarity patterns", "fsuda"};
    app.require_subcommand(1);

    SyntheticSpec gen;
    std::string gen_out;
    bool gen_force = false;
    Flags gen_flags(app, "gen-data", "Write a synthetic two-domain dataset");
    gen_flags.output("-o,--out", gen_out, "Dataset directory")->required();
    gen_flags.option("--train-classes", gen.train_classes, "Training classes");
    gen_flags.option("--val-classes", gen.val_classes, "Validation classes");
    gen_flags.option("--test-classes", gen.test_classes, "Test classes");
    gen_flags.option("--samples", gen.samples, "Images per class and domain");
    gen_flags.option("--height", gen.height, "Image height");
    gen_flags.option("--width", gen.width, "Image width");
    gen_flags.option("--min-strokes", gen.min_strokes, "Fewest strokes per glyph");
    gen_flags.option("--max-strokes", gen.max_strokes, "Most strokes per glyph");
    gen_flags.option("--noise", gen.noise, "Target-domain pixel noise");
    gen_flags.option("--seed", gen.seed, "Generator seed");
    gen_flags.app()->add_flag("--force", gen_force, "Overwrite an existing directory");

    PretrainFlags pre;
    Flags pre_flags(app, "pretrain", "Supervised pretraining of the embedding on source training classes");
    pre_flags.option("-d,--data", pre.data, "Dataset directory")->required();
    pre_flags.output("-o,--out", pre.out, "Checkpoint to write")->required();
    pre.model.add(pre_flags);
    pre_flags.option("--epochs", pre.config.epochs, "Epochs");
    pre_flags.option("--batch", pre.config.batch, "Batch size");
    pre_flags.option("--lr", pre.config.lr, "Learning rate");
    pre_flags.option("--seed", pre.config.seed, "Seed");
    pre_flags.option("--precision", pre.precision, "float or double");

    TrainFlags tr;
    Flags tr_flags(app, "train", "Episodic training");
    tr_flags.option("-d,--data", tr.data, "Dataset directory")->required();
    tr_flags.output("-o,--out", tr.out, "Checkpoint to write")->required();
    tr_flags.output("--metrics", tr.metrics, "Per-episode metrics (JSON lines)");
    tr_flags.output("--checkpoint-dir", tr.checkpoint_dir, "Directory for periodic checkpoints");
    tr_flags.option("--init", tr.init, "Checkpoint to start from");
    tr.task.add(tr_flags);
    tr.model.add(tr_flags);
    tr_flags.option("--episodes", tr.episodes, "Training episodes")->check(CLI::PositiveNumber);
    tr_flags.option("--lr", tr.lr, "Initial learning rate");
    tr_flags.option("--halve-every", tr.halve_every, "Episodes between learning-rate halvings");
    tr_flags.option("--lambda-spa", tr.lambda_spa, "Weight of the pattern covariance alignment");
    tr_flags.option("--lambda-adv", tr.lambda_adv, "Weight of the adversarial term");
    tr_flags.option("--lambda-msm", tr.lambda_msm, "Weight of multi-scale matching");
    tr_flags.option("--msm-k", tr.msm_k, "Neighbors pulled per target descriptor");
    tr_flags.option("--msm-n", tr.msm_n, "Neighbors in the matching softmax");
    tr_flags.option("--seed", tr.seed, "Seed");
    tr_flags.option("--precision", tr.precision, "float or double");
    tr_flags.flag("--pretrain", tr.pretrain, "Pretrain the embedding before episodic training");
    tr_flags.option("--pretrain-epochs", tr.pretrain_epochs, "Pretraining epochs");
    tr_flags.flag("--alternating", tr.alternating, "Separate F and D steps instead of gradient reversal");
    tr_flags.option("--select", tr.select, "final or best-val")->check(CLI::IsMember({"final", "best-val"}));
    tr_flags.option("--val-every", tr.val_every, "Episodes between validation runs");
    tr_flags.option("--val-tasks", tr.val_tasks, "Validation tasks per run");
    tr_flags.option("--checkpoint-every", tr.checkpoint_every, "Episodes between checkpoints; 0 disables");

    EvalFlags ev;
    Flags ev_flags(app, "eval", "Evaluate on target-domain tasks of unseen classes");
    ev_flags.option("-d,--data", ev.data, "Dataset directory")->required();
    ev_flags.option("-c,--checkpoint", ev.checkpoint, "Checkpoint; omitted means an untrained embedding");
    ev_flags.output("-o,--out", ev.out, "Report to write");
    ev.task.add(ev_flags);
    ev.model.add(ev_flags);
    ev_flags.option("--tasks", ev.tasks, "Number of tasks")->check(CLI::PositiveNumber);
    ev_flags.option("--split", ev.split, "val or test")->check(CLI::IsMember({"val", "test"}));
    ev_flags.option("--seed", ev.seed, "Seed");
    ev_flags.option("--precision", ev.precision, "float or double");
    ev_flags.app()->add_option("--threads", ev.threads, "Worker threads; 0 uses every core");

    SuiteOptions gc;
    std::string gc_out;
    Flags gc_flags(app, "gradcheck", "Finite-difference verification of every gradient");
    gc_flags.option("--instances", gc.instances, "Random instances per check");
    gc_flags.option("--seed", gc.seed, "Seed");
    gc_flags.option("--tolerance", gc.tolerance, "Largest relative error");
    gc_flags.option("--step", gc.step, "Central difference step");
    gc_flags.output("-o,--out", gc_out, "Result file");

    std::uint64_t st_seed = 20240917;
    std::string st_out;
    Flags st_flags(app, "selftest", "Oracle equivalence and closed-form checks");
    st_flags.option("--seed", st_seed, "Seed");
    st_flags.output("-o,--out", st_out, "Result file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (gen_flags.app()->parsed()) {
            write_synthetic(gen_out, gen, gen_force);
            write_file_atomic(gen_out + "/generator.json", settings_json(gen_flags));
            std::cout << "wrote " << gen_out << " (fingerprint " << gen_flags.fingerprint() << ")\n";
            return 0;
        }
        if (pre_flags.app()->parsed()) {
            check_precision(pre.precision);
            return pre.precision == "double" ? run_pretrain<double>(pre, pre_flags) : run_pretrain<float>(pre, pre_flags);
        }
        if (tr_flags.app()->parsed()) {
            check_precision(tr.precision);
            return tr.precision == "double" ? run_train<double>(tr, tr_flags) : run_train<float>(tr, tr_flags);
        }
        if (ev_flags.app()->parsed()) {
            check_precision(ev.precision);
            return ev.precision == "double" ? run_eval<double>(ev, ev_flags) : run_eval<float>(ev, ev_flags);
        }
        if (gc_flags.app()->parsed()) return report_suite(run_gradcheck_suite(gc), gc_out, gc_flags);
        if (st_flags.app()->parsed()) return report_suite(run_selftest_suite(st_seed), st_out, st_flags);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace fsuda
