#include "dscn/io.hpp"

#include "dscn/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace dscn::io {

namespace {

class ByteWriter {
public:
    void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void reals(std::span<const double> vs) {
        bytes_.reserve(bytes_.size() + 8 * vs.size());
        for (double v : vs) f64(v);
    }
    void text(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    void save(const fs::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
        out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
        if (!out) throw InputError("failed writing '" + path.string() + "'");
    }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(const fs::path& path) : path_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw InputError("cannot open '" + path_ + "' for reading");
        bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void expect_magic(std::string_view m) {
        need(m.size(), "magic");
        const std::string_view got(bytes_.data() + pos_, m.size());
        if (got != m) {
            throw FormatError(path_ + ": bad magic '" + printable(got) + "', expected '" + std::string(m) + "'", pos_);
        }
        pos_ += m.size();
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

    std::string text(const char* what) {
        const std::uint32_t n = u32(what);
        need(n, what);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    /// Reads `count` reals; the payload must be at least that long.
    std::vector<double> reals(std::uint64_t count, const char* what) {
        const std::uint64_t remaining = bytes_.size() - pos_;
        if (count > remaining / 8) {
            throw FormatError(path_ + ": truncated " + std::string(what) + ": header declares " + std::to_string(count) +
                                  " values but payload holds " + std::to_string(remaining / 8),
                              pos_);
        }
        std::vector<double> out(count);
        for (auto& v : out) v = f64(what);
        return out;
    }

    void expect_end() const {
        if (pos_ != bytes_.size()) {
            throw FormatError(path_ + ": " + std::to_string(bytes_.size() - pos_) +
                                  " trailing bytes after declared payload",
                              pos_);
        }
    }

    std::uint64_t offset() const noexcept { return pos_; }
    const std::string& path() const noexcept { return path_; }

private:
    void need(std::uint64_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(path_ + ": unexpected end of file reading " + what, pos_);
        }
    }

    static std::string printable(std::string_view s) {
        std::string out;
        for (char c : s) out += (c >= 32 && c < 127) ? c : '?';
        return out;
    }

    std::string path_;
    std::vector<char> bytes_;
    std::uint64_t pos_ = 0;
};

// Product of dims with overflow detection; FormatError when it exceeds 2^61 values.
std::uint64_t checked_count(std::initializer_list<std::uint32_t> dims, const ByteReader& r) {
    std::uint64_t total = 1;
    for (std::uint32_t d : dims) {
        if (d == 0) throw FormatError(r.path() + ": zero dimension in header", r.offset());
        if (total > (std::uint64_t{1} << 61) / d) {
            throw FormatError(r.path() + ": header dims overflow", r.offset());
        }
        total *= d;
    }
    return total;
}

std::uint32_t dim32(std::size_t v, const char* what) {
    if (v == 0 || v > std::numeric_limits<std::uint32_t>::max()) {
        throw InputError(std::string("cannot serialize ") + what + " = " + std::to_string(v));
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

void write_cube(const fs::path& path, const HyperCube& cube) {
    if (cube.data.size() != cube.width * cube.height * cube.bands) throw InputError("write_cube: inconsistent cube");
    ByteWriter w;
    w.magic("HSC1");
    w.u32(dim32(cube.width, "width"));
    w.u32(dim32(cube.height, "height"));
    w.u32(dim32(cube.bands, "bands"));
    w.reals(cube.data);
    w.save(path);
}

HyperCube read_cube(const fs::path& path) {
    ByteReader r(path);
    r.expect_magic("HSC1");
    const std::uint32_t W = r.u32("width"), H = r.u32("height"), B = r.u32("bands");
    const std::uint64_t n = checked_count({W, H, B}, r);
    HyperCube cube;
    cube.width = W;
    cube.height = H;
    cube.bands = B;
    cube.data = r.reals(n, "cube payload");
    r.expect_end();
    return cube;
}

void write_endmembers(const fs::path& path, const EndmemberMatrix& e) {
    if (e.values.size() != e.bands * e.count) throw InputError("write_endmembers: inconsistent matrix");
    ByteWriter w;
    w.magic("EMM1");
    w.u32(dim32(e.bands, "bands"));
    w.u32(dim32(e.count, "K"));
    w.reals(e.values);
    w.save(path);
}

EndmemberMatrix read_endmembers(const fs::path& path) {
    ByteReader r(path);
    r.expect_magic("EMM1");
    const std::uint32_t B = r.u32("bands"), K = r.u32("K");
    const std::uint64_t n = checked_count({B, K}, r);
    EndmemberMatrix e;
    e.bands = B;
    e.count = K;
    e.values = r.reals(n, "endmember payload");
    r.expect_end();
    return e;
}

void write_abundance(const fs::path& path, const AbundanceMap& map) {
    if (map.data.size() != map.width * map.height * map.count) throw InputError("write_abundance: inconsistent map");
    ByteWriter w;
    w.magic("ABM1");
    w.u32(dim32(map.width, "width"));
    w.u32(dim32(map.height, "height"));
    w.u32(dim32(map.count, "K"));
    w.reals(map.data);
    w.save(path);
}

AbundanceMap read_abundance(const fs::path& path) {
    ByteReader r(path);
    r.expect_magic("ABM1");
    const std::uint32_t W = r.u32("width"), H = r.u32("height"), K = r.u32("K");
    const std::uint64_t n = checked_count({W, H, K}, r);
    AbundanceMap map;
    map.width = W;
    map.height = H;
    map.count = K;
    map.data = r.reals(n, "abundance payload");
    r.expect_end();
    return map;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_real(std::string_view cell, double& out) {
    cell = trim(cell);
    if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
    if (cell.empty()) return false;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    return ec == std::errc() && ptr == cell.data() + cell.size();
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

}  // namespace

EndmemberMatrix import_endmembers_csv(const fs::path& path, bool clamp_negatives) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "' for reading");
    const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::vector<std::vector<double>> rows;
    std::size_t offset = 0, line_no = 0;
    bool first = true;
    while (offset < content.size()) {
        std::size_t end = content.find('\n', offset);
        if (end == std::string::npos) end = content.size();
        const std::string_view line = trim(std::string_view(content).substr(offset, end - offset));
        const std::size_t line_offset = offset;
        offset = end + 1;
        ++line_no;
        if (line.empty()) continue;

        const auto cells = split(line);
        std::vector<double> row(cells.size());
        bool numeric = true;
        std::size_t bad_col = 0;
        for (std::size_t c = 0; c < cells.size() && numeric; ++c) {
            if (!parse_real(cells[c], row[c])) {
                numeric = false;
                bad_col = c;
            }
        }
        if (!numeric) {
            if (first) {
                first = false;
                continue;  // header
            }
            throw FormatError(path.string() + ": non-numeric cell '" + std::string(trim(cells[bad_col])) + "' at row " +
                                  std::to_string(line_no) + ", column " + std::to_string(bad_col + 1),
                              line_offset);
        }
        first = false;
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw FormatError(path.string() + ": ragged row " + std::to_string(line_no) + " has " +
                                  std::to_string(row.size()) + " columns, expected " +
                                  std::to_string(rows.front().size()),
                              line_offset);
        }
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (!std::isfinite(row[c])) {
                throw FormatError(path.string() + ": non-finite value at row " + std::to_string(line_no) + ", column " +
                                      std::to_string(c + 1),
                                  line_offset);
            }
            if (row[c] < 0.0) {
                if (!clamp_negatives) {
                    throw InputError(path.string() + ": negative reflectance " + std::to_string(row[c]) + " at row " +
                                     std::to_string(line_no) + ", column " + std::to_string(c + 1));
                }
                std::cerr << "warning: " << path.string() << ": clamping negative value at row " << line_no
                          << ", column " << c + 1 << " to 0\n";
                row[c] = 0.0;
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(path.string() + ": no numeric rows", 0);

    EndmemberMatrix e(rows.size(), rows.front().size());
    for (std::size_t b = 0; b < e.bands; ++b) {
        for (std::size_t k = 0; k < e.count; ++k) e(b, k) = rows[b][k];
    }
    return e;
}

void export_endmembers_csv(const fs::path& path, const EndmemberMatrix& e) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    char buf[32];
    for (std::size_t b = 0; b < e.bands; ++b) {
        for (std::size_t k = 0; k < e.count; ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", e(b, k));
            out << (k ? "," : "") << buf;
        }
        out << '\n';
    }
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

EndmemberMatrix read_endmembers_any(const fs::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".csv" ? import_endmembers_csv(path) : read_endmembers(path);
}

// ---------------------------------------------------------------------------
// Model file
//
//   "DSCN" u32 version
//   config: u32 bands, K, block1 filters/width, block2 filters/width,
//           block3 filters/width, pool window, pool stride,
//           fusion (0 = DSCN-S, 1 = DSCN-P), spectral norm mode (0 per-sample, 1 pooled),
//           f64 norm epsilon, f64 batch-norm momentum, u64 seed
//   u32 flags: bit 0 bn3 running stats initialized, bit 1 head running stats initialized
//   u32 tensor count, then per tensor: u32 name length, name, u64 count, count f64

namespace {

struct NamedBuffer {
    std::string name;
    std::span<double> values;
};

std::vector<NamedBuffer> model_buffers(ModelParams& p) {
    std::vector<NamedBuffer> out;
    for (auto& v : p.trainable()) out.push_back({v.name, v.values});
    out.push_back({"bn3.running_mean", p.bn3_stats.mean});
    out.push_back({"bn3.running_var", p.bn3_stats.var});
    if (p.config.fusion == Fusion::Sparse) {
        out.push_back({"head_bn.running_mean", p.head_stats.mean});
        out.push_back({"head_bn.running_var", p.head_stats.var});
    }
    out.push_back({"endmembers", p.endmembers.values});
    return out;
}

}  // namespace

void save_model(const fs::path& path, const ModelParams& params) {
    ModelParams p = params;
    const ModelConfig& c = p.config;
    ByteWriter w;
    w.magic("DSCN");
    w.u32(kModelFormatVersion);
    for (std::size_t v : {c.bands, c.endmembers, c.block1.filters, c.block1.kernel_width, c.block2.filters,
                          c.block2.kernel_width, c.block3.filters, c.block3.kernel_width, c.pool_window,
                          c.pool_stride}) {
        w.u32(dim32(v, "model dimension"));
    }
    w.u32(c.fusion == Fusion::Sparse ? 0 : 1);
    w.u32(c.spectral_norm_mode == nn::MomentAxes::SpectralPerSample ? 0 : 1);
    w.f64(c.norm_epsilon);
    w.f64(c.bn_momentum);
    w.u64(c.seed);
    w.u32((p.bn3_stats.initialized ? 1u : 0u) | (p.head_stats.initialized ? 2u : 0u));

    const auto buffers = model_buffers(p);
    w.u32(static_cast<std::uint32_t>(buffers.size()));
    for (const auto& b : buffers) {
        w.text(b.name);
        w.u64(b.values.size());
        w.reals(b.values);
    }
    w.save(path);
}

ModelParams load_model(const fs::path& path) {
    ByteReader r(path);
    r.expect_magic("DSCN");
    const std::uint64_t version_offset = r.offset();
    const std::uint32_t version = r.u32("format version");
    if (version != kModelFormatVersion) {
        throw FormatError(path.string() + ": unsupported model format version " + std::to_string(version),
                          version_offset);
    }
    ModelConfig c;
    c.bands = r.u32("bands");
    c.endmembers = r.u32("K");
    c.block1 = {r.u32("block1 filters"), r.u32("block1 width")};
    c.block2 = {r.u32("block2 filters"), r.u32("block2 width")};
    c.block3 = {r.u32("block3 filters"), r.u32("block3 width")};
    c.pool_window = r.u32("pool window");
    c.pool_stride = r.u32("pool stride");
    const std::uint64_t enum_offset = r.offset();
    const std::uint32_t fusion = r.u32("fusion"), mode = r.u32("spectral norm mode");
    if (fusion > 1 || mode > 1) throw FormatError(path.string() + ": invalid fusion or norm mode", enum_offset);
    c.fusion = fusion == 0 ? Fusion::Sparse : Fusion::Probabilistic;
    c.spectral_norm_mode = mode == 0 ? nn::MomentAxes::SpectralPerSample : nn::MomentAxes::SpectralAndBatch;
    c.norm_epsilon = r.f64("norm epsilon");
    c.bn_momentum = r.f64("bn momentum");
    c.seed = r.u64("seed");
    const std::uint32_t flags = r.u32("flags");

    std::map<std::string, std::vector<double>> records;
    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint64_t at = r.offset();
        std::string name = r.text("tensor name");
        const std::uint64_t n = r.u64("tensor size");
        auto values = r.reals(n, "tensor payload");
        if (!records.emplace(std::move(name), std::move(values)).second) {
            throw FormatError(path.string() + ": duplicate tensor record", at);
        }
    }
    r.expect_end();

    const auto em = records.find("endmembers");
    if (em == records.end() || em->second.size() != c.bands * c.endmembers) {
        throw FormatError(path.string() + ": missing or mis-sized endmember record", r.offset());
    }
    EndmemberMatrix e(c.bands, c.endmembers);
    e.values = em->second;

    ModelParams p;
    try {
        p = build_model(c, e);
    } catch (const Error& ex) {
        throw FormatError(path.string() + ": stored config is invalid: " + ex.what(), 8);
    }
    auto buffers = model_buffers(p);
    if (buffers.size() != records.size()) {
        throw FormatError(path.string() + ": expected " + std::to_string(buffers.size()) + " tensors, found " +
                              std::to_string(records.size()),
                          r.offset());
    }
    for (auto& b : buffers) {
        const auto it = records.find(b.name);
        if (it == records.end() || it->second.size() != b.values.size()) {
            throw FormatError(path.string() + ": missing or mis-sized tensor '" + b.name + "'", r.offset());
        }
        std::copy(it->second.begin(), it->second.end(), b.values.begin());
    }
    p.bn3_stats.initialized = (flags & 1u) != 0;
    p.head_stats.initialized = (flags & 2u) != 0;
    return p;
}

// ---------------------------------------------------------------------------

void write_pgm(const fs::path& path, std::size_t width, std::size_t height, std::span<const double> values) {
    if (values.size() != width * height) throw InputError("write_pgm: value count does not match image size");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << "P5\n" << width << ' ' << height << "\n255\n";
    std::vector<char> pixels(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = std::isfinite(values[i]) ? std::clamp(values[i], 0.0, 1.0) : 0.0;
        pixels[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

}  // namespace dscn::io
