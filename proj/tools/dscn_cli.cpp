#include "dscn/error.hpp"
#include "dscn/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace dscn;
using namespace dscn::harness;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string out = ".";
    std::string manifest;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
    app->add_option("--out", c.out, "Output directory")->capture_default_str();
    app->add_option("--manifest", c.manifest, "Manifest path (default: <out>/<subcommand>_manifest.json)");
}

std::optional<fs::path> optional_path(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
}

struct TrainFlags {
    std::string cube, endmembers, fusion = "p", snorm = "per-sample";
    std::size_t iters = 5000, batch = 64;
    double lr = 1e-3;
    LossWeights weights;
    bool verbose = false;
};

void add_train_flags(CLI::App* app, TrainFlags& t, bool required) {
    app->add_option("--cube", t.cube, "HSC1 cube")->required(required)->check(CLI::ExistingFile);
    app->add_option("--endmembers", t.endmembers, "EMM1 or CSV endmembers")->required(required)->check(CLI::ExistingFile);
    app->add_option("--fusion", t.fusion, "Fusion head: s (sparse) or p (probabilistic)")
        ->check(CLI::IsMember({"s", "p"}))
        ->capture_default_str();
    app->add_option("--spectral-norm", t.snorm, "Spectral normalization moments")
        ->check(CLI::IsMember({"per-sample", "pooled"}))
        ->capture_default_str();
    app->add_option("--iters", t.iters, "Training iterations")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--batch", t.batch, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--lr", t.lr, "Adam learning rate")->capture_default_str();
    app->add_option("--lambda1", t.weights.lambda1, "Reconstruction weight")->capture_default_str();
    app->add_option("--lambda2", t.weights.lambda2, "Sparsity weight")->capture_default_str();
    app->add_option("--lambda3", t.weights.lambda3, "Weight decay")->capture_default_str();
    app->add_flag("--verbose,-v", t.verbose, "Print progress to stderr");
}

TrainOptions to_train_options(const TrainFlags& t, const Common& c, const std::vector<std::string>& argv) {
    TrainOptions o;
    o.cube = t.cube;
    o.endmembers = t.endmembers;
    o.model.fusion = t.fusion == "s" ? Fusion::Sparse : Fusion::Probabilistic;
    o.model.spectral_norm_mode = t.snorm == "pooled" ? nn::MomentAxes::SpectralAndBatch : nn::MomentAxes::SpectralPerSample;
    o.model.seed = c.seed;
    o.train.iterations = t.iters;
    o.train.batch_size = t.batch;
    o.train.seed = c.seed;
    o.train.weights = t.weights;
    o.train.weights.validate();
    o.train.adam.lr = t.lr;
    o.out_dir = c.out;
    o.manifest = optional_path(c.manifest);
    o.command_line = argv;
    o.verbose = t.verbose;
    return o;
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s) {
    std::size_t w = 0, h = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%zux%zu%c", &w, &h, &tail) != 2 || w == 0 || h == 0) {
        throw UsageError("--size expects WxH with positive integers, got '" + s + "'");
    }
    return {w, h};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> command_line(argv, argv + argc);
    CLI::App app{"Spectral-convolution unmixing encoder: synthesis, training, unmixing and evaluation"};
    app.require_subcommand(1);

    // synth
    Common synth_c;
    std::size_t k = 3, bands = 64;
    std::string size = "32x32";
    std::optional<double> snr;
    double alpha = 1.0, separation = 0.15;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
    add_common(synth, synth_c);
    synth->add_option("--k", k, "Number of endmembers")->capture_default_str();
    synth->add_option("--bands", bands, "Number of bands")->capture_default_str();
    synth->add_option("--size", size, "Spatial size WxH")->capture_default_str();
    synth->add_option("--snr", snr, "Noise level in dB (omit for noiseless)");
    synth->add_option("--alpha", alpha, "Dirichlet concentration")->capture_default_str();
    synth->add_option("--separation", separation, "Minimum pairwise spectral angle (radians)")->capture_default_str();

    // train
    Common train_c;
    TrainFlags train_f;
    auto* train_cmd = app.add_subcommand("train", "Train an encoder against frozen endmembers");
    add_common(train_cmd, train_c);
    add_train_flags(train_cmd, train_f, true);

    // unmix
    Common unmix_c;
    std::string unmix_cube, unmix_model, unmix_e, unmix_truth, png_dir, baseline;
    auto* unmix = app.add_subcommand("unmix", "Estimate abundances for a cube");
    add_common(unmix, unmix_c);
    unmix->add_option("--cube", unmix_cube, "HSC1 cube")->required()->check(CLI::ExistingFile);
    unmix->add_option("--model", unmix_model, "Trained model file")->check(CLI::ExistingFile);
    unmix->add_option("--baseline", baseline, "Use a baseline solver instead of the encoder")
        ->check(CLI::IsMember({"fcls"}));
    unmix->add_option("--endmembers", unmix_e, "Endmembers for the baseline")->check(CLI::ExistingFile);
    unmix->add_option("--truth", unmix_truth, "Ground-truth ABM1 for RMSE and difference images")
        ->check(CLI::ExistingFile);
    unmix->add_option("--png-dir", png_dir, "Write one PGM per material here");

    // eval
    Common eval_c;
    TrainFlags eval_f;
    std::string estimate, truth;
    std::vector<std::size_t> trials_arg;
    auto* eval = app.add_subcommand("eval", "RMSE tables, optionally over repeated train+unmix trials");
    add_common(eval, eval_c);
    eval->add_option("--estimate", estimate, "Estimated ABM1")->check(CLI::ExistingFile);
    eval->add_option("--truth", truth, "Ground-truth ABM1")->required()->check(CLI::ExistingFile);
    eval->add_option("--trials", trials_arg, "Repeat train+unmix N times (flag alone: 20)")->expected(0, 1);
    add_train_flags(eval, eval_f, false);

    // gradcheck
    GradcheckSuiteOptions gc;
    std::string fault;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare every backward pass with finite differences");
    gradcheck->set_help_flag("--help", "Print this help message and exit");  // frees "--h" for the step size
    gradcheck->add_option("--h", gc.h, "Central difference step")->capture_default_str();
    gradcheck->add_option("--tol", gc.tol, "Relative error tolerance")->capture_default_str();
    gradcheck->add_option("--seed", gc.seed, "Fixture seed")->capture_default_str();
    gradcheck->add_option("--inject-fault", fault, "Corrupt one layer's analytic gradient (test fixture)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsageError;
    }

    try {
        if (*synth) {
            SynthOptions o;
            o.scene.endmembers = k;
            o.scene.bands = bands;
            std::tie(o.scene.width, o.scene.height) = parse_size(size);
            o.scene.snr_db = snr;
            o.scene.dirichlet_alpha = alpha;
            o.scene.min_separation = separation;
            o.scene.seed = synth_c.seed;
            o.out_dir = synth_c.out;
            o.manifest = optional_path(synth_c.manifest);
            o.command_line = command_line;
            const auto out = run_synth(o);
            std::cout << "cube        " << out.cube.string() << "\nendmembers  " << out.endmembers.string()
                      << "\nabundance   " << out.abundance.string() << "\nmanifest    " << out.manifest.string() << '\n';
        } else if (*train_cmd) {
            const auto out = run_train(to_train_options(train_f, train_c, command_line));
            const auto& last = out.result.trace.back();
            std::printf("final loss %.6f (recon %.6f sparsity %.6f decay %.3f)\n", last.total, last.recon,
                        last.sparsity, last.decay);
            std::cout << "model     " << out.model.string() << "\nloss csv  " << out.loss_csv.string()
                      << "\nmanifest  " << out.manifest.string() << '\n';
        } else if (*unmix) {
            UnmixOptions o;
            o.cube = unmix_cube;
            o.backend = baseline == "fcls" ? Backend::Fcls : Backend::Dscn;
            o.model = optional_path(unmix_model);
            o.endmembers = optional_path(unmix_e);
            o.truth = optional_path(unmix_truth);
            o.png_dir = optional_path(png_dir);
            o.out_dir = unmix_c.out;
            o.manifest = optional_path(unmix_c.manifest);
            o.command_line = command_line;
            const auto out = run_unmix(o);
            if (out.rmse) std::cout << format_rmse_table(out.rmse->scaled(100.0), "RMSE (x1e-2)");
            std::cout << "abundance " << out.abundance.string() << "\nmanifest  " << out.manifest.string() << '\n';
        } else if (*eval) {
            EvalOptions o;
            o.truth = truth;
            o.estimate = optional_path(estimate);
            if (eval->count("--trials") > 0) {
                o.trials = trials_arg.empty() ? kDefaultTrials : trials_arg.front();
                if (o.trials == 0) throw UsageError("--trials must be positive");
                if (eval_f.cube.empty() || eval_f.endmembers.empty()) {
                    throw UsageError("--trials needs --cube and --endmembers");
                }
                o.pipeline = to_train_options(eval_f, eval_c, command_line);
            }
            o.seed = eval_c.seed;
            o.out_dir = eval_c.out;
            o.manifest = optional_path(eval_c.manifest);
            o.command_line = command_line;
            const auto out = run_eval(o);
            std::cout << out.table << "csv       " << out.csv.string() << "\nmanifest  " << out.manifest.string()
                      << '\n';
        } else if (*gradcheck) {
            if (!fault.empty()) gc.inject_fault = fault;
            const auto r = run_gradcheck_suite(gc);
            std::cout << format_gradcheck_report(r, gc);
            return r.passed ? kOk : kCheckFailed;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return kOk;
}
