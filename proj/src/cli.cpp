#include "reln/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "reln/audit.hpp"
#include "reln/tasks.hpp"
#include "reln/train.hpp"

namespace reln {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

std::vector<std::size_t> parse_widths(const std::string& s) {
    std::vector<std::size_t> out;
    for (const std::string& tok : split(s, ','))
        if (!tok.empty()) out.push_back(std::stoul(tok));
    return out;
}

struct GenDataArgs {
    std::string task;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string out;
    double sigma = 0.4;
    std::size_t steps = 200;
    double dt = 0.05;
    double sigma_min = 0.2;
    double sigma_max = 1.0;
    double lambda = 0.8;
    double v_mid = 0.0;
};

int cmd_gen_data(const GenDataArgs& a) {
    std::cout << "gen-data task=" << a.task << " n=" << a.n << " seed=" << a.seed
              << " out=" << a.out;
    Dataset ds;
    if (a.task == "sp4") {
        std::cout << " sigma=" << a.sigma << "\n";
        ds = gen_sp4_dataset(a.n, a.sigma, a.seed);
    } else {
        std::cout << " steps=" << a.steps << " dt=" << a.dt << " sigma-min=" << a.sigma_min
                  << " sigma-max=" << a.sigma_max << " lambda=" << a.lambda << " v-mid=" << a.v_mid
                  << "\n";
        NoiseParams p;
        p.sigma_min = a.sigma_min;
        p.sigma_max = a.sigma_max;
        p.lambda = a.lambda;
        p.v_mid = a.v_mid;
        ds = gen_cov_dataset(a.n, a.steps, a.dt, p, a.seed);
    }
    const std::vector<std::uint8_t> bytes = encode_dataset(ds);
    write_file(a.out, bytes);
    // the stored trailer checksum (hashing the whole file would always give
    // the CRC-32 residue constant)
    std::printf("wrote %s: %llu samples, crc32 %08x\n", a.out.c_str(),
                static_cast<unsigned long long>(ds.num_samples),
                crc32(bytes.data(), bytes.size() - 4));
    return 0;
}

struct TrainArgs {
    std::string data, out, log, resume, checkpoint;
    std::string arch = "reln";
    std::string layers = "linear:32,relu,bracket,linear:32,relu";
    std::string head = "32";
    std::string widths = "128,128";
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::size_t batch = 100;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    std::size_t augment = 0;
    std::size_t eval_m = 4;
    double sigma = 0.5;
    double val_frac = 0.1;
    unsigned threads = 1;
};

int cmd_train(const TrainArgs& a) {
    const Dataset ds = read_dataset(a.data);

    std::unique_ptr<Trainable> model;
    TrainState state;
    bool resumed = false;
    if (!a.resume.empty()) {
        model = decode_checkpoint(read_file(a.resume), state);
        resumed = true;
    } else if (a.arch == "reln") {
        ModelSpec spec;
        spec.algebra = ds.algebra_name;
        spec.n = ds.n;
        spec.in_channels = ds.inputs_per_sample;
        spec.layers = parse_layers(a.layers, spec.in_channels);
        spec.head_widths = parse_widths(a.head);
        spec.out_dim = ds.target_dim;
        model = make_reln_trainable(init_params(spec, a.seed));
    } else if (a.arch == "mlp") {
        FlatMlpSpec spec;
        spec.algebra = ds.algebra_name;
        spec.n = ds.n;
        spec.in_dim = ds.inputs_per_sample * ds.K;
        spec.hidden = parse_widths(a.widths);
        spec.out_dim = ds.target_dim;
        model = make_mlp_trainable(spec, a.seed);
    } else {
        throw UsageError("unknown --arch '" + a.arch + "'");
    }

    TrainConfig cfg;
    cfg.lr = a.lr;
    cfg.beta1 = a.beta1;
    cfg.beta2 = a.beta2;
    cfg.eps = a.eps;
    cfg.batch = a.batch;
    cfg.epochs = a.epochs;
    cfg.seed = a.seed;
    cfg.augment = a.augment;
    cfg.eval_m = a.eval_m;
    cfg.group_sigma = a.sigma;
    cfg.val_fraction = a.val_frac;
    cfg.threads = a.threads;

    std::cout << "train data=" << a.data << " arch=" << model->arch()
              << " params=" << model->n_params() << " lr=" << cfg.lr << " batch=" << cfg.batch
              << " epochs=" << cfg.epochs << " augment=" << cfg.augment << " eval-m=" << cfg.eval_m
              << " sigma=" << cfg.group_sigma << " threads=" << cfg.threads << " seed=" << cfg.seed
              << (resumed ? " (resumed epoch " + std::to_string(state.next_epoch) + ")" : "")
              << "\n";

    std::ofstream metrics;
    if (!a.log.empty()) {
        metrics.open(a.log, resumed ? std::ios::app : std::ios::trunc);
        if (!metrics) throw IoError("cannot open metrics log '" + a.log + "'");
    }

    const TrainResult result =
        train_loop(*model, ds, cfg, metrics.is_open() ? &metrics : nullptr, &state);

    if (!a.checkpoint.empty()) write_file(a.checkpoint, encode_checkpoint(*model, state));

    if (!a.out.empty()) {
        // best-by-validation parameters go into the model file
        const std::vector<double> final_params = model->get_params();
        model->set_params_flat(result.best_params);
        write_file(a.out, serialize_trainable(*model));
        model->set_params_flat(final_params);
        std::cout << "wrote " << a.out << " (best epoch " << result.best_epoch << ", val loss "
                  << result.best_val << ")\n";
    }
    if (!result.epochs.empty()) {
        const EpochStats& last = result.epochs.back();
        std::cout << "final epoch " << last.epoch << ": train " << last.train_loss << ", val "
                  << last.val_loss << ", inv_err " << last.invariance_error << "\n";
    }
    return 0;
}

struct EvalArgs {
    std::string model, data;
    std::size_t conj = 500;
    double sigma = 0.5;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

int cmd_eval(const EvalArgs& a) {
    auto model = load_trainable(a.model);
    const Dataset ds = read_dataset(a.data);
    nlohmann::json desc = nlohmann::json::parse(
        rlnm_decode(read_file(a.model)).descriptor);
    const std::string model_alg = desc.value("algebra", "");
    if (model_alg != ds.algebra_name)
        throw UsageError("algebra mismatch: model is " + model_alg + ", data is " +
                         ds.algebra_name);
    std::cout << "eval model=" << a.model << " data=" << a.data << " conj=" << a.conj
              << " sigma=" << a.sigma << " seed=" << a.seed << " threads=" << a.threads << "\n";
    const EvalReport rep = evaluate(*model, ds, a.conj, a.sigma, a.seed, a.threads);
    std::printf("mse_id           %.12g\n", rep.mse_id);
    std::printf("mse_conjugated   %.12g  (M=%zu)\n", rep.mse_conjugated, rep.conj_count);
    std::printf("invariance_error %.12g\n", rep.invariance_error);
    std::printf("wall_seconds     %.3f\n", rep.wall_seconds);
    return 0;
}

struct AuditArgs {
    std::string algebra;
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    bool negative_control = false;
};

int cmd_audit(const AuditArgs& a) {
    std::cout << "audit algebra=" << a.algebra << " trials=" << a.trials << " seed=" << a.seed
              << (a.negative_control ? " negative-control" : "") << "\n";
    const std::vector<PropertyResult> results =
        audit_algebra(a.algebra, a.trials, a.seed, a.negative_control);
    bool all_pass = true;
    for (const PropertyResult& r : results) {
        std::printf("%-34s max_dev %.3e  tol %.1e  %s\n", r.name.c_str(), r.deviation, r.tolerance,
                    r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "audit: all properties hold\n" : "audit: FAILURES detected\n");
    return all_pass ? 0 : 1;
}

struct GradCheckArgs {
    std::string algebra = "sp4";
    std::string layers = "linear:6,relu,bracket,linear:6,relu";
    std::string head = "16";
    std::size_t in_channels = 2;
    std::size_t batch = 4;
    double h = 1e-5;
    std::uint64_t seed = 0;
};

int cmd_gradcheck(const GradCheckArgs& a) {
    std::cout << "gradcheck algebra=" << a.algebra << " layers=" << a.layers << " h=" << a.h
              << " batch=" << a.batch << " seed=" << a.seed << "\n";
    if (a.h > 1e-3)
        std::cout << "warning: h=" << a.h
                  << " is large; truncation error will dominate the comparison\n";
    const LieAlgebra alg = algebra_from_cli_name(a.algebra);
    ModelSpec spec;
    spec.algebra = alg.name;
    spec.n = alg.n;
    spec.in_channels = a.in_channels;
    spec.layers = parse_layers(a.layers, spec.in_channels);
    spec.head_widths = parse_widths(a.head);
    spec.out_dim = 1;
    Model m = init_params(spec, a.seed);
    const GradCheckReport rep = grad_check_auto(m, a.batch, a.h, a.seed);
    for (const auto& [name, err] : rep.per_tensor)
        std::printf("%-28s max_rel_err %.3e\n", name.c_str(), err);
    std::printf("overall max_rel_err %.3e\n", rep.max_rel_err);
    return 0;
}

struct InfoArgs {
    std::string algebra;
    std::string file;
};

int cmd_info(const InfoArgs& a) {
    if (!a.algebra.empty()) {
        const LieAlgebra alg = algebra_from_cli_name(a.algebra);
        std::cout << "algebra " << alg.name << ": n=" << alg.n << " K=" << alg.K << "\n";
        std::cout << "invariant form rank " << nondegeneracy_rank(modified_gl_form(alg)) << "/"
                  << alg.K << ", killing oracle rank " << nondegeneracy_rank(killing_oracle(alg))
                  << "/" << alg.K << "\n";
        return 0;
    }
    if (a.file.empty()) throw UsageError("info needs --algebra or --file");
    const std::vector<std::uint8_t> bytes = read_file(a.file);
    if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "RLND") {
        const Dataset ds = decode_dataset(bytes);
        std::cout << "dataset " << a.file << ": algebra=" << ds.algebra_name << " n=" << ds.n
                  << " K=" << ds.K << " inputs_per_sample=" << ds.inputs_per_sample
                  << " channels=" << ds.channels << " target_dim=" << ds.target_dim
                  << " N=" << ds.num_samples << " seed=" << ds.seed
                  << " target_mean=" << ds.target_mean << " target_std=" << ds.target_std << "\n";
        std::printf("crc32 %08x\n", crc32(bytes.data(), bytes.size() - 4));
        return 0;
    }
    if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "RLNM") {
        const RlnmPayload p = rlnm_decode(bytes);
        std::cout << "model " << a.file << ": " << p.descriptor << "\n";
        std::cout << "doubles stored: " << p.doubles.size() << "\n";
        std::printf("crc32 %08x\n", crc32(bytes.data(), bytes.size() - 4));
        return 0;
    }
    throw std::runtime_error("unrecognized file format");
}

}  // namespace

std::vector<LayerSpec> parse_layers(const std::string& dsl, std::size_t in_channels) {
    std::vector<LayerSpec> out;
    std::size_t cur = in_channels;
    for (const std::string& token : split(dsl, ',')) {
        if (token.empty()) continue;
        const std::vector<std::string> f = split(token, ':');
        LayerSpec l;
        l.kind = parse_layer_kind(f[0]);
        l.in_channels = cur;
        switch (l.kind) {
            case LayerKind::linear:
                if (f.size() < 2) throw UsageError("linear layer needs an output width, e.g. linear:32");
                l.out_channels = std::stoul(f[1]);
                break;
            case LayerKind::leaky_relu:
                l.out_channels = cur;
                l.alpha = f.size() >= 2 ? std::stod(f[1]) : 0.2;
                break;
            default:
                l.out_channels = cur;
                break;
        }
        cur = l.out_channels;
        out.push_back(l);
    }
    return out;
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"reductive Lie neuron toolkit"};
    // --h is a real flag of gradcheck, so help must not claim -h
    app.set_help_flag("--help", "print help");
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* sub_gen = app.add_subcommand("gen-data", "generate a dataset file");
    sub_gen->add_option("--task", gen.task, "sp4 or covseq")
        ->required()
        ->check(CLI::IsMember({"sp4", "covseq"}));
    sub_gen->add_option("--n", gen.n, "sample count (sp4) or sequence count (covseq)")
        ->required()
        ->check(CLI::PositiveNumber);
    sub_gen->add_option("--seed", gen.seed)->required();
    sub_gen->add_option("--out", gen.out)->required();
    sub_gen->add_option("--sigma", gen.sigma, "sp4 coordinate sampling scale");
    sub_gen->add_option("--steps", gen.steps, "covseq steps per sequence");
    sub_gen->add_option("--dt", gen.dt);
    sub_gen->add_option("--sigma-min", gen.sigma_min);
    sub_gen->add_option("--sigma-max", gen.sigma_max);
    sub_gen->add_option("--lambda", gen.lambda);
    sub_gen->add_option("--v-mid", gen.v_mid, "0 = use the mean ground-truth speed");

    TrainArgs tr;
    CLI::App* sub_train = app.add_subcommand("train", "train a model");
    sub_train->add_option("--data", tr.data)->required();
    sub_train->add_option("--out", tr.out, "model output path");
    sub_train->add_option("--log", tr.log, "tab-separated metrics log");
    sub_train->add_option("--resume", tr.resume, "checkpoint to continue from");
    sub_train->add_option("--checkpoint", tr.checkpoint, "checkpoint output path");
    sub_train->add_option("--arch", tr.arch)->check(CLI::IsMember({"reln", "mlp"}));
    sub_train->add_option("--layers", tr.layers);
    sub_train->add_option("--head", tr.head);
    sub_train->add_option("--widths", tr.widths, "mlp hidden widths");
    sub_train->add_option("--lr", tr.lr)->check(CLI::PositiveNumber);
    sub_train->add_option("--batch", tr.batch)->check(CLI::PositiveNumber);
    sub_train->add_option("--epochs", tr.epochs);
    sub_train->add_option("--seed", tr.seed);
    sub_train->add_option("--augment", tr.augment, "conjugated copies per sample per epoch");
    sub_train->add_option("--eval-m", tr.eval_m, "per-epoch metric conjugations");
    sub_train->add_option("--sigma", tr.sigma, "group sampling scale");
    sub_train->add_option("--val-frac", tr.val_frac);
    sub_train->add_option("--threads", tr.threads);

    EvalArgs ev;
    CLI::App* sub_eval = app.add_subcommand("eval", "evaluate a model on a dataset");
    sub_eval->add_option("--model", ev.model)->required();
    sub_eval->add_option("--data", ev.data)->required();
    sub_eval->add_option("--conj", ev.conj, "conjugation count");
    sub_eval->add_option("--sigma", ev.sigma);
    sub_eval->add_option("--seed", ev.seed);
    sub_eval->add_option("--threads", ev.threads);

    AuditArgs au;
    CLI::App* sub_audit = app.add_subcommand("audit", "run the property suite");
    sub_audit->add_option("--algebra", au.algebra)->required();
    sub_audit->add_option("--trials", au.trials)->check(CLI::PositiveNumber);
    sub_audit->add_option("--seed", au.seed);
    sub_audit->add_flag("--negative-control", au.negative_control,
                        "corrupt the form; the audit must then fail");

    GradCheckArgs gc;
    CLI::App* sub_gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
    sub_gc->set_help_flag("--help", "print help");
    sub_gc->add_option("--algebra", gc.algebra);
    sub_gc->add_option("--layers", gc.layers);
    sub_gc->add_option("--head", gc.head);
    sub_gc->add_option("--in-channels", gc.in_channels);
    sub_gc->add_option("--batch", gc.batch)->check(CLI::PositiveNumber);
    sub_gc->add_option("--h", gc.h)->check(CLI::PositiveNumber);
    sub_gc->add_option("--seed", gc.seed);

    InfoArgs in;
    CLI::App* sub_info = app.add_subcommand("info", "describe an algebra or a file");
    sub_info->add_option("--algebra", in.algebra);
    sub_info->add_option("--file", in.file);

    std::vector<std::string> argv_like(args.rbegin(), args.rend());
    try {
        app.parse(argv_like);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            app.exit(e);
            return 0;
        }
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (sub_gen->parsed()) return cmd_gen_data(gen);
        if (sub_train->parsed()) return cmd_train(tr);
        if (sub_eval->parsed()) return cmd_eval(ev);
        if (sub_audit->parsed()) return cmd_audit(au);
        if (sub_gc->parsed()) return cmd_gradcheck(gc);
        if (sub_info->parsed()) return cmd_info(in);
        std::cerr << "no subcommand\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace reln
