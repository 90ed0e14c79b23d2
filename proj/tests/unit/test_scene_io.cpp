#include "dscn/error.hpp"
#include "dscn/io.hpp"
#include "dscn/objective.hpp"
#include "dscn/optimizer.hpp"
#include "dscn/scene.hpp"
#include "helpers.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

using namespace dscn;
using test_support::TempDir;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void put_u32(std::vector<char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

TEST_SUITE("datagen-io") {

TEST_CASE("scene validation") {
    SceneSpec s;
    s.endmembers = 1;
    CHECK_THROWS_AS(synth_scene(s), ConfigError);
    s.endmembers = 3;
    s.bands = 4;
    CHECK_THROWS_AS(synth_scene(s), ConfigError);
    s.bands = 8;
    s.endmembers = 8;
    s.min_separation = 1.5;
    CHECK_THROWS_AS(synth_scene(s), ConfigError);
}

TEST_CASE("synthetic scenes are deterministic and well formed (property)") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SceneSpec s;
        s.endmembers = 2 + seed % 4;
        s.bands = 32 + 8 * (seed % 3);
        s.width = 6;
        s.height = 5;
        s.seed = seed;
        s.dirichlet_alpha = seed % 2 ? 0.3 : 1.0;
        const Scene a = synth_scene(s);
        const Scene b = synth_scene(s);
        CHECK(a.cube == b.cube);
        CHECK(a.endmembers == b.endmembers);
        CHECK(a.abundances == b.abundances);
        for (std::size_t i = 0; i < a.abundances.pixel_count(); ++i)
            CHECK(simplex_violation(a.abundances.pixel(i)) <= 1e-12);
        for (std::size_t j = 0; j < s.endmembers; ++j) {
            for (double v : a.endmembers.column(j)) CHECK(v >= 0.0);
            for (std::size_t k = j + 1; k < s.endmembers; ++k)
                CHECK(sad(a.endmembers.column(j), a.endmembers.column(k)) >= s.min_separation);
        }
        // Noiseless cubes follow the linear mixing model.
        CHECK(mix(a.endmembers, a.abundances) == a.cube);
    }
}

TEST_CASE("pure pixels reproduce the endmember") {
    SceneSpec s;
    s.endmembers = 2;
    s.bands = 16;
    s.width = 2;
    s.height = 1;
    const Scene scene = synth_scene(s);
    AbundanceMap a(2, 1, 2);
    a.pixel(0)[0] = 1.0;
    a.pixel(1)[1] = 1.0;
    const HyperCube cube = mix(scene.endmembers, a);
    for (std::size_t b = 0; b < 16; ++b) {
        CHECK(cube.pixel(0)[b] == scene.endmembers(b, 0));
        CHECK(cube.pixel(1)[b] == scene.endmembers(b, 1));
    }
}

TEST_CASE("noise level matches the requested SNR") {
    SceneSpec s;
    s.snr_db = 30.0;
    s.seed = 11;
    const Scene noisy = synth_scene(s);
    const HyperCube clean = mix(noisy.endmembers, noisy.abundances);
    const double snr = measured_snr_db(clean, noisy.cube);
    CHECK(snr >= 29.0);
    CHECK(snr <= 31.0);
}

TEST_CASE("binary round trips are bit-exact") {
    TempDir dir("roundtrip");
    SceneSpec s;
    s.width = 7;
    s.height = 3;
    s.snr_db = 20.0;
    s.seed = 5;
    const Scene scene = synth_scene(s);
    io::write_cube(dir / "c.hsc", scene.cube);
    io::write_endmembers(dir / "e.emm", scene.endmembers);
    io::write_abundance(dir / "a.abm", scene.abundances);
    CHECK(io::read_cube(dir / "c.hsc") == scene.cube);
    CHECK(io::read_endmembers(dir / "e.emm") == scene.endmembers);
    CHECK(io::read_abundance(dir / "a.abm") == scene.abundances);
    CHECK(io::read_endmembers_any(dir / "e.emm") == scene.endmembers);

    const auto bytes = slurp(dir / "c.hsc");
    REQUIRE(bytes.size() == 16 + 7 * 3 * 64 * 8);
    CHECK(std::memcmp(bytes.data(), "HSC1", 4) == 0);
    CHECK(bytes[4] == 7);
    CHECK(bytes[8] == 3);
    CHECK(bytes[12] == 64);
}

TEST_CASE("binary readers reject malformed files") {
    TempDir dir("malformed");
    SUBCASE("bad magic names the expected magic") {
        std::vector<char> b{'X', 'X', 'X', 'X'};
        put_u32(b, 1);
        put_u32(b, 1);
        put_u32(b, 1);
        for (int i = 0; i < 8; ++i) b.push_back(0);
        spit(dir / "bad.hsc", b);
        try {
            io::read_cube(dir / "bad.hsc");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("HSC1") != std::string::npos);
            CHECK(e.offset() == 0);
        }
    }
    SUBCASE("payload short by one value") {
        HyperCube cube(100, 100, 198);
        io::write_cube(dir / "full.hsc", cube);
        auto b = slurp(dir / "full.hsc");
        b.resize(b.size() - 8);
        spit(dir / "short.hsc", b);
        try {
            io::read_cube(dir / "short.hsc");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
            CHECK(e.offset() == 16);
        }
    }
    SUBCASE("trailing bytes") {
        AbundanceMap a(2, 2, 2);
        io::write_abundance(dir / "a.abm", a);
        auto b = slurp(dir / "a.abm");
        b.push_back(0);
        spit(dir / "a.abm", b);
        CHECK_THROWS_AS(io::read_abundance(dir / "a.abm"), FormatError);
    }
    SUBCASE("overflowing dims") {
        std::vector<char> b{'E', 'M', 'M', '1'};
        put_u32(b, 0xffffffffu);
        put_u32(b, 0xffffffffu);
        spit(dir / "huge.emm", b);
        CHECK_THROWS_AS(io::read_endmembers(dir / "huge.emm"), FormatError);
    }
    SUBCASE("zero dims") {
        std::vector<char> b{'A', 'B', 'M', '1'};
        put_u32(b, 0);
        put_u32(b, 4);
        put_u32(b, 2);
        spit(dir / "zero.abm", b);
        CHECK_THROWS_AS(io::read_abundance(dir / "zero.abm"), FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(io::read_cube(dir / "absent.hsc"), Error);
    }
}

TEST_CASE("endmember CSV import") {
    TempDir dir("csv");
    SUBCASE("identity") {
        spit(dir / "eye.csv", "1,0\n0,1\n");
        const auto e = io::import_endmembers_csv(dir / "eye.csv");
        CHECK(e.bands == 2);
        CHECK(e.count == 2);
        CHECK(e(0, 0) == 1.0);
        CHECK(e(1, 0) == 0.0);
        CHECK(e(0, 1) == 0.0);
        CHECK(e(1, 1) == 1.0);
    }
    SUBCASE("header row is skipped") {
        spit(dir / "h.csv", "tree,water\n0.5,0.1\n0.25,0.2\n0.125,0.3\n");
        const auto e = io::import_endmembers_csv(dir / "h.csv");
        CHECK(e.bands == 3);
        CHECK(e.count == 2);
        CHECK(e(2, 1) == 0.3);
    }
    SUBCASE("ragged row") {
        spit(dir / "r.csv", "1,0\n0,1,2\n");
        try {
            io::import_endmembers_csv(dir / "r.csv");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("row 2") != std::string::npos);
        }
    }
    SUBCASE("non-numeric cell") {
        spit(dir / "n.csv", "1,0\n0,abc\n");
        try {
            io::import_endmembers_csv(dir / "n.csv");
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find("abc") != std::string::npos);
        }
    }
    SUBCASE("negative values") {
        spit(dir / "neg.csv", "1,-0.5\n0.5,1\n");
        CHECK_THROWS_AS(io::import_endmembers_csv(dir / "neg.csv"), InputError);
        const auto e = io::import_endmembers_csv(dir / "neg.csv", true);
        CHECK(e(0, 1) == 0.0);
    }
    SUBCASE("export and import reproduce the matrix") {
        SceneSpec s;
        s.endmembers = 4;
        s.bands = 50;
        s.seed = 8;
        const auto e = synth_scene(s).endmembers;
        io::export_endmembers_csv(dir / "e.csv", e);
        const auto back = io::read_endmembers_any(dir / "e.csv");
        REQUIRE(back.bands == e.bands);
        REQUIRE(back.count == e.count);
        for (std::size_t i = 0; i < e.values.size(); ++i) CHECK(std::abs(back.values[i] - e.values[i]) <= 1e-12);
        CHECK(back == e);
    }
}

TEST_CASE("model files round-trip") {
    TempDir dir("model");
    SceneSpec s;
    s.bands = 16;
    s.width = 4;
    s.height = 4;
    s.seed = 3;
    const Scene scene = synth_scene(s);
    for (Fusion fusion : {Fusion::Sparse, Fusion::Probabilistic}) {
        ModelConfig cfg;
        cfg.bands = 16;
        cfg.endmembers = 3;
        cfg.block1 = {4, 3};
        cfg.block2 = {4, 3};
        cfg.block3 = {2, 3};
        cfg.fusion = fusion;
        cfg.spectral_norm_mode = nn::MomentAxes::SpectralAndBatch;
        cfg.seed = 42;
        TrainConfig tc;
        tc.iterations = 5;
        tc.batch_size = 8;
        const auto trained = train(scene.cube, scene.endmembers, cfg, tc).params;
        io::save_model(dir / "m.dscn", trained);
        CHECK(io::load_model(dir / "m.dscn") == trained);

        const auto fresh = build_model(cfg, scene.endmembers);
        io::save_model(dir / "fresh.dscn", fresh);
        CHECK(io::load_model(dir / "fresh.dscn") == fresh);
    }

    auto bytes = slurp(dir / "m.dscn");
    CHECK(std::memcmp(bytes.data(), "DSCN", 4) == 0);
    bytes[4] = 99;  // unknown format version
    spit(dir / "v.dscn", bytes);
    CHECK_THROWS_AS(io::load_model(dir / "v.dscn"), FormatError);
    bytes = slurp(dir / "m.dscn");
    bytes.resize(bytes.size() / 2);
    spit(dir / "t.dscn", bytes);
    CHECK_THROWS_AS(io::load_model(dir / "t.dscn"), FormatError);
}

TEST_CASE("PGM export") {
    TempDir dir("pgm");
    const std::vector<double> v{0.0, 0.5, 1.0, 2.0, -1.0, 0.25};
    io::write_pgm(dir / "x.pgm", 3, 2, v);
    const auto b = slurp(dir / "x.pgm");
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(b.size() == header.size() + 6);
    CHECK(std::string(b.begin(), b.begin() + static_cast<long>(header.size())) == header);
    const auto* px = reinterpret_cast<const unsigned char*>(b.data() + header.size());
    CHECK(px[0] == 0);
    CHECK(px[1] == 128);
    CHECK(px[2] == 255);
    CHECK(px[3] == 255);
    CHECK(px[4] == 0);
    CHECK(px[5] == 64);
}

}  // TEST_SUITE
