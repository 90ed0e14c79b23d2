#include "dscn/error.hpp"
#include "dscn/harness.hpp"
#include "dscn/io.hpp"
#include "helpers.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sys/wait.h>

using namespace dscn;
using namespace dscn::harness;
using test_support::TempDir;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SynthOptions small_synth(const fs::path& out, std::uint64_t seed = 7) {
    SynthOptions o;
    o.scene.bands = 16;
    o.scene.width = 8;
    o.scene.height = 8;
    o.scene.snr_db = 30.0;
    o.scene.seed = seed;
    o.out_dir = out;
    return o;
}

TrainOptions small_train(const SynthOutputs& s, const fs::path& out) {
    TrainOptions o;
    o.cube = s.cube;
    o.endmembers = s.endmembers;
    o.model.block1 = {4, 3};
    o.model.block2 = {4, 3};
    o.model.block3 = {2, 3};
    o.train.iterations = 20;
    o.train.batch_size = 16;
    o.out_dir = out;
    return o;
}

#ifdef DSCN_CLI_PATH
int run_cli(const std::string& args) {
    const std::string cmd = std::string(DSCN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string cli_output(const std::string& args, const fs::path& capture) {
    [[maybe_unused]] const int status = std::system((std::string(DSCN_CLI_PATH) + " " + args + " >" + capture.string() + " 2>&1").c_str());
    return slurp(capture);
}
#endif

}  // namespace

TEST_SUITE("harness-cli") {

TEST_CASE("exit codes by error class") {
    CHECK(exit_code_for(InputError("x")) == kUsageError);
    CHECK(exit_code_for(ConfigError("x")) == kUsageError);
    CHECK(exit_code_for(FormatError("x", 3)) == kUsageError);
    CHECK(exit_code_for(NumericalError("x", "t")) == kNumericalFailure);
    CHECK(exit_code_for(DomainError("x")) == kNumericalFailure);
}

TEST_CASE("synth writes deterministic files and a manifest") {
    TempDir a("synth_a"), b("synth_b");
    const auto oa = run_synth(small_synth(a.path()));
    const auto ob = run_synth(small_synth(b.path()));
    CHECK(slurp(oa.cube) == slurp(ob.cube));
    CHECK(slurp(oa.endmembers) == slurp(ob.endmembers));
    CHECK(slurp(oa.abundance) == slurp(ob.abundance));
    const auto m = nlohmann::json::parse(slurp(oa.manifest));
    CHECK(m["subcommand"] == "synth");
    CHECK(m["config"]["scene"]["seed"] == 7);
    CHECK(m.contains("timestamp"));

    auto bad = small_synth(a.path());
    bad.scene.endmembers = 1;
    CHECK_THROWS_AS(run_synth(bad), ConfigError);
}

TEST_CASE("train, unmix and eval pipeline") {
    TempDir dir("pipeline");
    const auto s = run_synth(small_synth(dir / "scene"));
    const auto t = run_train(small_train(s, dir / "train"));
    CHECK(t.result.trace.size() == 20);
    CHECK(fs::exists(t.model));
    const std::string csv = slurp(t.loss_csv);
    CHECK(csv.rfind("iteration,total,recon,sparsity,decay\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 21);

    UnmixOptions u;
    u.cube = s.cube;
    u.model = t.model;
    u.truth = s.abundance;
    u.png_dir = dir / "png";
    u.out_dir = dir / "unmix";
    const auto uo = run_unmix(u);
    REQUIRE(uo.rmse);
    CHECK(uo.images.size() == 9);
    for (const auto& img : uo.images) CHECK(slurp(img).rfind("P5\n8 8\n255\n", 0) == 0);
    const AbundanceMap est = io::read_abundance(uo.abundance);
    for (std::size_t i = 0; i < est.pixel_count(); ++i) CHECK(simplex_violation(est.pixel(i)) <= 1e-6);

    EvalOptions e;
    e.estimate = uo.abundance;
    e.truth = s.abundance;
    e.out_dir = dir / "eval";
    const auto eo = run_eval(e);
    REQUIRE(eo.reports.size() == 1);
    const auto direct = uo.rmse->scaled(100.0);
    CHECK(eo.reports[0].per_material == direct.per_material);
    CHECK(eo.table.find("Avg.") != std::string::npos);

    SUBCASE("fcls baseline on the same files") {
        UnmixOptions f;
        f.cube = s.cube;
        f.backend = Backend::Fcls;
        f.endmembers = s.endmembers;
        f.truth = s.abundance;
        f.out_dir = dir / "fcls";
        const auto fo = run_unmix(f);
        REQUIRE(fo.rmse);
        CHECK(fo.rmse->average < 0.05);
    }
    SUBCASE("band mismatch is an input error") {
        auto spec = small_synth(dir / "other");
        spec.scene.bands = 20;
        const auto other = run_synth(spec);
        UnmixOptions m;
        m.cube = other.cube;
        m.model = t.model;
        m.out_dir = dir / "mismatch";
        CHECK_THROWS_AS(run_unmix(m), InputError);
        auto bad = small_train(s, dir / "bad");
        bad.endmembers = other.endmembers;
        CHECK_THROWS_AS(run_train(bad), InputError);
    }
}

TEST_CASE("eval of the truth against itself is zero") {
    TempDir dir("eval_zero");
    const auto s = run_synth(small_synth(dir.path()));
    EvalOptions e;
    e.estimate = s.abundance;
    e.truth = s.abundance;
    e.out_dir = dir.path();
    const auto out = run_eval(e);
    for (double v : out.reports[0].per_material) CHECK(v == 0.0);
    CHECK(out.reports[0].average == 0.0);
}

TEST_CASE("multi-trial evaluation") {
    TempDir dir("trials");
    const auto s = run_synth(small_synth(dir / "scene"));
    EvalOptions e;
    e.truth = s.abundance;
    e.trials = 3;
    e.seed = 10;
    e.pipeline = small_train(s, dir / "unused");
    e.out_dir = dir / "eval";
    const auto out = run_eval(e);
    REQUIRE(out.summary);
    CHECK(out.summary->trials == 3);
    CHECK(out.reports.size() == 3);
    CHECK(out.table.find("±") != std::string::npos);
    // Trial seeds are consecutive, so trial 0 repeats a single run with seed 10.
    auto single = small_train(s, dir / "single");
    single.model.seed = 10;
    single.train.seed = 10;
    const auto t = run_train(single);
    const auto r = rmse_per_material(unmix_cube(t.result.params, io::read_cube(s.cube)), io::read_abundance(s.abundance));
    CHECK(r.scaled(100.0).average == out.reports[0].average);
}

TEST_CASE("trial statistics and formatting") {
    std::vector<RmseReport> reports{{{1.0, 3.0}, 2.0}, {{3.0, 3.0}, 3.0}};
    const auto s = summarize_trials(reports);
    CHECK(s.mean == std::vector<double>{2.0, 3.0});
    CHECK(s.stddev[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(s.stddev[1] == 0.0);
    CHECK(s.average_mean == 2.5);
    CHECK(format_mean_std(7.0612, 0.93) == "7.06±0.9");
    const std::string table = format_trial_table(s, "DSCN-P");
    CHECK(table.find("DSCN-P") != std::string::npos);
    CHECK(table.find("2.00±1.4") != std::string::npos);
    CHECK(kDefaultTrials == 20);
}

TEST_CASE("gradient check suite") {
    GradcheckSuiteOptions o;
    const auto r = run_gradcheck_suite(o);
    CHECK(r.passed);
    CHECK(r.seconds < 30.0);
    bool saw_model_s = false, saw_pooled = false;
    for (const auto& e : r.entries) {
        CAPTURE(e.layer);
        CAPTURE(e.target);
        CHECK(e.report.max_rel_error < 1e-4);
        saw_model_s |= e.layer == "model[DSCN-S]";
        saw_pooled |= e.layer == "spectral_norm[pooled]";
    }
    CHECK(saw_model_s);
    CHECK(saw_pooled);
    const std::string report = format_gradcheck_report(r, o);
    CHECK(report.find("h=0.001 tol=0.0001") != std::string::npos);

    o.inject_fault = "conv";
    const auto bad = run_gradcheck_suite(o);
    CHECK_FALSE(bad.passed);
    for (const auto& e : bad.entries) CHECK(e.report.passed == (e.layer.rfind("conv", 0) != 0));
    CHECK(format_gradcheck_report(bad, o).find("FAIL conv") != std::string::npos);
}

#ifdef DSCN_CLI_PATH
TEST_CASE("command-line exit codes") {
    TempDir dir("cli");
    const std::string out = dir.path().string();
    CHECK(run_cli("synth --k 3 --bands 16 --size 8x8 --snr 30 --seed 7 --out " + out) == 0);
    CHECK(fs::exists(dir / "scene.hsc"));
    CHECK(fs::exists(dir / "endmembers.emm"));
    CHECK(fs::exists(dir / "abundance.abm"));
    CHECK(fs::exists(dir / "synth_manifest.json"));
    CHECK(run_cli("synth --k 1 --out " + out) == 2);
    CHECK(run_cli("synth --size 8by8 --out " + out) == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("--help") == 0);

    const std::string cube = (dir / "scene.hsc").string(), em = (dir / "endmembers.emm").string(),
                      truth = (dir / "abundance.abm").string();
    CHECK(run_cli("train --cube " + cube + " --endmembers " + em + " --iters 10 --batch 8 --out " + out) == 0);
    CHECK(run_cli("unmix --cube " + cube + " --model " + (dir / "model.dscn").string() + " --truth " + truth +
                  " --png-dir " + (dir / "png").string() + " --out " + out) == 0);
    CHECK(fs::exists(dir / "png" / "absdiff_3.pgm"));
    CHECK(run_cli("unmix --cube " + cube + " --baseline fcls --endmembers " + em + " --out " + out) == 0);
    CHECK(run_cli("unmix --cube " + cube + " --out " + out) == 2);  // no model
    CHECK(run_cli("eval --estimate " + (dir / "estimate.abm").string() + " --truth " + truth + " --out " + out) == 0);
    CHECK(run_cli("eval --estimate " + (dir / "model.dscn").string() + " --truth " + truth + " --out " + out) == 2);

    CHECK(run_cli("gradcheck") == 0);
    const std::string fault = cli_output("gradcheck --inject-fault conv", dir / "gc.txt");
    CHECK(fault.find("FAIL conv") != std::string::npos);
    CHECK(run_cli("gradcheck --inject-fault conv") == 1);
    CHECK(cli_output("gradcheck", dir / "gc2.txt").find("h=0.001 tol=0.0001") != std::string::npos);
}
#endif

}  // TEST_SUITE
