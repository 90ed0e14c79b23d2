#include "dscn/harness.hpp"

#include "dscn/error.hpp"
#include "dscn/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dscn::harness {

using nlohmann::json;

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kNumericalFailure;
    if (dynamic_cast<const ContractError*>(&e)) return kNumericalFailure;
    return kUsageError;
}

namespace {

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

fs::path manifest_path(const std::optional<fs::path>& explicit_path, const fs::path& out_dir,
                       const std::string& subcommand) {
    return explicit_path ? *explicit_path : out_dir / (subcommand + "_manifest.json");
}

std::string norm_mode_name(nn::MomentAxes a) {
    switch (a) {
        case nn::MomentAxes::SpectralPerSample: return "per-sample";
        case nn::MomentAxes::SpectralAndBatch: return "pooled";
        case nn::MomentAxes::BatchAndSpectralPerChannel: return "batch";
    }
    return "unknown";
}

json block_json(const BlockShape& b) { return {{"filters", b.filters}, {"kernel_width", b.kernel_width}}; }

std::vector<double> material_plane(const AbundanceMap& map, std::size_t k) {
    std::vector<double> plane(map.pixel_count());
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = map.data[i * map.count + k];
    return plane;
}

void write_rmse_csv(const fs::path& path, const std::vector<RmseReport>& reports) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "trial";
    const std::size_t k = reports.empty() ? 0 : reports.front().per_material.size();
    for (std::size_t m = 0; m < k; ++m) out << ",material_" << (m + 1);
    out << ",average\n";
    char buf[32];
    for (std::size_t t = 0; t < reports.size(); ++t) {
        out << t;
        for (double v : reports[t].per_material) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.17g\n", reports[t].average);
        out << buf;
    }
}

std::string title_line(const std::string& column) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-10s %s\n", "Material", column.c_str());
    return buf;
}

}  // namespace

json RunManifest::to_json() const {
    return {{"subcommand", subcommand}, {"timestamp", utc_timestamp()}, {"command_line", command_line},
            {"config", config},         {"inputs", inputs},              {"outputs", outputs}};
}

void RunManifest::write(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write manifest " + path.string());
    out << to_json().dump(2) << '\n';
}

json to_json(const ModelConfig& c) {
    return {{"bands", c.bands},
            {"endmembers", c.endmembers},
            {"block1", block_json(c.block1)},
            {"block2", block_json(c.block2)},
            {"block3", block_json(c.block3)},
            {"pool_window", c.pool_window},
            {"pool_stride", c.pool_stride},
            {"fusion", to_string(c.fusion)},
            {"spectral_norm_mode", norm_mode_name(c.spectral_norm_mode)},
            {"norm_epsilon", c.norm_epsilon},
            {"bn_momentum", c.bn_momentum},
            {"seed", c.seed}};
}

json to_json(const TrainConfig& c) {
    return {{"iterations", c.iterations},
            {"batch_size", c.batch_size},
            {"seed", c.seed},
            {"lambda1", c.weights.lambda1},
            {"lambda2", c.weights.lambda2},
            {"lambda3", c.weights.lambda3},
            {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}}};
}

json to_json(const SceneSpec& s) {
    return {{"endmembers", s.endmembers},
            {"bands", s.bands},
            {"width", s.width},
            {"height", s.height},
            {"snr_db", s.snr_db ? json(*s.snr_db) : json(nullptr)},
            {"dirichlet_alpha", s.dirichlet_alpha},
            {"seed", s.seed},
            {"min_separation", s.min_separation}};
}

// --- synth -----------------------------------------------------------------

SynthOutputs run_synth(const SynthOptions& opts) {
    opts.scene.validate();
    const Scene scene = synth_scene(opts.scene);
    prepare_dir(opts.out_dir);

    SynthOutputs out;
    out.cube = opts.out_dir / "scene.hsc";
    out.endmembers = opts.out_dir / "endmembers.emm";
    out.abundance = opts.out_dir / "abundance.abm";
    out.manifest = manifest_path(opts.manifest, opts.out_dir, "synth");
    io::write_cube(out.cube, scene.cube);
    io::write_endmembers(out.endmembers, scene.endmembers);
    io::write_abundance(out.abundance, scene.abundances);

    RunManifest m{"synth", {{"scene", to_json(opts.scene)}}, json::object(),
                  {{"cube", out.cube.string()}, {"endmembers", out.endmembers.string()},
                   {"abundance", out.abundance.string()}},
                  opts.command_line};
    m.write(out.manifest);
    return out;
}

// --- train -----------------------------------------------------------------

void write_loss_csv(const fs::path& path, const std::vector<LossBreakdown>& trace) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "iteration,total,recon,sparsity,decay\n";
    char buf[160];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& t = trace[i];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, t.total, t.recon, t.sparsity, t.decay);
        out << buf;
    }
}

TrainOutputs run_train(const TrainOptions& opts) {
    const HyperCube cube = io::read_cube(opts.cube);
    const EndmemberMatrix e = io::read_endmembers_any(opts.endmembers);
    if (e.bands != cube.bands) {
        throw InputError("band count mismatch: cube " + opts.cube.string() + " has " + std::to_string(cube.bands) +
                         " bands, endmembers " + opts.endmembers.string() + " have " + std::to_string(e.bands));
    }
    ModelConfig cfg = opts.model;
    cfg.bands = cube.bands;
    cfg.endmembers = e.count;

    TrainProgress progress;
    if (opts.verbose) {
        progress = [&opts](std::size_t it, const LossBreakdown& l) {
            if ((it + 1) % 500 == 0 || it + 1 == opts.train.iterations) {
                std::fprintf(stderr, "iter %zu loss %.6f (recon %.6f sparsity %.6f decay %.3f)\n", it + 1, l.total,
                             l.recon, l.sparsity, l.decay);
            }
        };
    }

    TrainOutputs out;
    out.result = train(cube, e, cfg, opts.train, progress);
    prepare_dir(opts.out_dir);
    out.model = opts.out_dir / "model.dscn";
    out.loss_csv = opts.out_dir / "loss.csv";
    out.manifest = manifest_path(opts.manifest, opts.out_dir, "train");
    io::save_model(out.model, out.result.params);
    write_loss_csv(out.loss_csv, out.result.trace);

    RunManifest m{"train", {{"model", to_json(cfg)}, {"train", to_json(opts.train)}},
                  {{"cube", opts.cube.string()}, {"endmembers", opts.endmembers.string()}},
                  {{"model", out.model.string()}, {"loss_csv", out.loss_csv.string()}},
                  opts.command_line};
    m.write(out.manifest);
    return out;
}

// --- unmix -----------------------------------------------------------------

std::vector<fs::path> write_abundance_images(const fs::path& dir, const AbundanceMap& estimate,
                                             const AbundanceMap* truth) {
    prepare_dir(dir);
    std::vector<fs::path> paths;
    for (std::size_t k = 0; k < estimate.count; ++k) {
        const auto plane = material_plane(estimate, k);
        paths.push_back(dir / ("estimate_" + std::to_string(k + 1) + ".pgm"));
        io::write_pgm(paths.back(), estimate.width, estimate.height, plane);
        if (truth) {
            auto diff = material_plane(*truth, k);
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = std::abs(plane[i] - diff[i]);
            paths.push_back(dir / ("truth_" + std::to_string(k + 1) + ".pgm"));
            io::write_pgm(paths.back(), truth->width, truth->height, material_plane(*truth, k));
            paths.push_back(dir / ("absdiff_" + std::to_string(k + 1) + ".pgm"));
            io::write_pgm(paths.back(), estimate.width, estimate.height, diff);
        }
    }
    return paths;
}

UnmixOutputs run_unmix(const UnmixOptions& opts) {
    const HyperCube cube = io::read_cube(opts.cube);
    json config;
    json inputs{{"cube", opts.cube.string()}};
    AbundanceMap estimate;

    if (opts.backend == Backend::Dscn) {
        if (!opts.model) throw UsageError("unmix: the dscn backend needs a model file");
        const ModelParams p = io::load_model(*opts.model);
        if (p.config.bands != cube.bands) {
            throw InputError("band count mismatch: model " + opts.model->string() + " expects " +
                             std::to_string(p.config.bands) + " bands, cube " + opts.cube.string() + " has " +
                             std::to_string(cube.bands));
        }
        estimate = unmix_cube(p, cube);
        config = {{"backend", "dscn"}, {"model", to_json(p.config)}};
        inputs["model"] = opts.model->string();
    } else {
        if (!opts.endmembers) throw UsageError("unmix: the fcls backend needs an endmember file");
        const EndmemberMatrix e = io::read_endmembers_any(*opts.endmembers);
        if (e.bands != cube.bands) {
            throw InputError("band count mismatch: endmembers " + opts.endmembers->string() + " have " +
                             std::to_string(e.bands) + " bands, cube " + opts.cube.string() + " has " +
                             std::to_string(cube.bands));
        }
        estimate = fcls_unmix_cube(cube, e, opts.fcls);
        config = {{"backend", "fcls"},
                  {"max_iters", opts.fcls.max_iters},
                  {"tol", opts.fcls.tol},
                  {"step_rule", opts.fcls.step_rule == StepRule::Lipschitz ? "lipschitz" : "backtracking"}};
        inputs["endmembers"] = opts.endmembers->string();
    }

    prepare_dir(opts.out_dir);
    UnmixOutputs out;
    out.abundance = opts.out_dir / "estimate.abm";
    out.manifest = manifest_path(opts.manifest, opts.out_dir, "unmix");
    io::write_abundance(out.abundance, estimate);
    json outputs{{"abundance", out.abundance.string()}};

    std::optional<AbundanceMap> truth;
    if (opts.truth) {
        truth = io::read_abundance(*opts.truth);
        out.rmse = rmse_per_material(estimate, *truth);
        inputs["truth"] = opts.truth->string();
        outputs["rmse_x1e-2"] = out.rmse->scaled(100.0).per_material;
    }
    if (opts.png_dir) {
        out.images = write_abundance_images(*opts.png_dir, estimate, truth ? &*truth : nullptr);
        for (const auto& p : out.images) outputs["images"].push_back(p.string());
    }

    RunManifest{"unmix", config, inputs, outputs, opts.command_line}.write(out.manifest);
    return out;
}

// --- eval ------------------------------------------------------------------

TrialSummary summarize_trials(const std::vector<RmseReport>& reports) {
    TrialSummary s;
    s.trials = reports.size();
    if (reports.empty()) return s;
    const std::size_t k = reports.front().per_material.size();
    const auto mean_std = [&](auto&& get) {
        double mean = 0.0;
        for (const auto& r : reports) mean += get(r);
        mean /= static_cast<double>(reports.size());
        double ss = 0.0;
        for (const auto& r : reports) ss += (get(r) - mean) * (get(r) - mean);
        const double sd = reports.size() > 1 ? std::sqrt(ss / static_cast<double>(reports.size() - 1)) : 0.0;
        return std::pair{mean, sd};
    };
    for (std::size_t m = 0; m < k; ++m) {
        const auto [mean, sd] = mean_std([m](const RmseReport& r) { return r.per_material.at(m); });
        s.mean.push_back(mean);
        s.stddev.push_back(sd);
    }
    std::tie(s.average_mean, s.average_stddev) = mean_std([](const RmseReport& r) { return r.average; });
    return s;
}

std::string format_mean_std(double mean, double stddev) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f±%.1f", mean, stddev);
    return buf;
}

std::string format_rmse_table(const RmseReport& scaled, const std::string& column) {
    std::string out = title_line(column);
    char buf[64];
    for (std::size_t m = 0; m < scaled.per_material.size(); ++m) {
        std::snprintf(buf, sizeof buf, "%-10zu %.2f\n", m + 1, scaled.per_material[m]);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "%-10s %.2f\n", "Avg.", scaled.average);
    return out + buf;
}

std::string format_trial_table(const TrialSummary& s, const std::string& column) {
    std::string out = title_line(column);
    char buf[64];
    for (std::size_t m = 0; m < s.mean.size(); ++m) {
        std::snprintf(buf, sizeof buf, "%-10zu ", m + 1);
        out += buf + format_mean_std(s.mean[m], s.stddev[m]) + "\n";
    }
    std::snprintf(buf, sizeof buf, "%-10s ", "Avg.");
    return out + buf + format_mean_std(s.average_mean, s.average_stddev) + "\n";
}

EvalOutputs run_eval(const EvalOptions& opts) {
    const AbundanceMap truth = io::read_abundance(opts.truth);
    EvalOutputs out;
    json config, inputs{{"truth", opts.truth.string()}};

    if (opts.trials > 0) {
        if (!opts.pipeline) throw UsageError("eval: --trials needs a cube and endmembers to train on");
        const TrainOptions& base = *opts.pipeline;
        const HyperCube cube = io::read_cube(base.cube);
        const EndmemberMatrix e = io::read_endmembers_any(base.endmembers);
        if (e.bands != cube.bands) throw InputError("band count mismatch between cube and endmembers");
        if (truth.pixel_count() != cube.pixel_count() || truth.count != e.count) {
            throw InputError("ground truth " + opts.truth.string() + " does not match the cube/endmember dims");
        }
        ModelConfig cfg = base.model;
        cfg.bands = cube.bands;
        cfg.endmembers = e.count;
        for (std::size_t t = 0; t < opts.trials; ++t) {
            ModelConfig mc = cfg;
            TrainConfig tc = base.train;
            mc.seed = opts.seed + t;
            tc.seed = opts.seed + t;
            const TrainResult r = train(cube, e, mc, tc);
            out.reports.push_back(rmse_per_material(unmix_cube(r.params, cube), truth).scaled(100.0));
            if (base.verbose) {
                std::fprintf(stderr, "trial %zu/%zu seed %llu avg RMSE x1e-2 %.3f\n", t + 1, opts.trials,
                             static_cast<unsigned long long>(opts.seed + t), out.reports.back().average);
            }
        }
        out.summary = summarize_trials(out.reports);
        out.table = format_trial_table(*out.summary, to_string(cfg.fusion));
        config = {{"trials", opts.trials}, {"seed", opts.seed}, {"model", to_json(cfg)}, {"train", to_json(base.train)}};
        inputs["cube"] = base.cube.string();
        inputs["endmembers"] = base.endmembers.string();
    } else {
        if (!opts.estimate) throw UsageError("eval: needs an estimate file or --trials");
        const AbundanceMap estimate = io::read_abundance(*opts.estimate);
        out.reports.push_back(rmse_per_material(estimate, truth).scaled(100.0));
        out.table = format_rmse_table(out.reports.front(), "RMSE (x1e-2)");
        inputs["estimate"] = opts.estimate->string();
    }

    prepare_dir(opts.out_dir);
    out.csv = opts.out_dir / "rmse.csv";
    out.manifest = manifest_path(opts.manifest, opts.out_dir, "eval");
    write_rmse_csv(out.csv, out.reports);
    RunManifest{"eval", config, inputs, {{"csv", out.csv.string()}, {"table", out.table}}, opts.command_line}.write(
        out.manifest);
    return out;
}

}  // namespace dscn::harness
