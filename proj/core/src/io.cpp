#include "waswhistle/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace waswhistle {

// This codebase only targets little-endian hosts; the on-disk formats are
// declared little-endian so plain memcpy round-trips are exact.
static_assert(sizeof(float) == 4 && sizeof(double) == 8);

void write_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), std::streamsize(n));
    if (!os) throw IoError("write failed");
}
void write_u32(std::ostream& os, uint32_t v) { write_bytes(os, &v, 4); }
void write_u64(std::ostream& os, uint64_t v) { write_bytes(os, &v, 8); }
void write_f32(std::ostream& os, float v) { write_bytes(os, &v, 4); }
void write_f64(std::ostream& os, double v) { write_bytes(os, &v, 8); }
void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, uint32_t(s.size()));
    write_bytes(os, s.data(), s.size());
}

void read_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), std::streamsize(n));
    if (!is) throw IoError("read failed (truncated file?)");
}
uint32_t read_u32(std::istream& is) { uint32_t v; read_bytes(is, &v, 4); return v; }
uint64_t read_u64(std::istream& is) { uint64_t v; read_bytes(is, &v, 8); return v; }
float read_f32(std::istream& is) { float v; read_bytes(is, &v, 4); return v; }
double read_f64(std::istream& is) { double v; read_bytes(is, &v, 8); return v; }
std::string read_string(std::istream& is) {
    uint32_t n = read_u32(is);
    std::string s(n, '\0');
    if (n) read_bytes(is, s.data(), n);
    return s;
}

uint64_t fnv1a(const void* p, size_t n, uint64_t h) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}
uint64_t fnv1a(const std::string& s, uint64_t h) { return fnv1a(s.data(), s.size(), h); }

std::string digest_hex(uint64_t d) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(d));
    return buf;
}

uint64_t file_digest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof buf);
        h = fnv1a(buf, size_t(f.gcount()), h);
    }
    return h;
}

// --- spectrogram cache -------------------------------------------------------

static constexpr uint32_t kSpecMagic = 0x43505357; // "WSPC" little-endian
static constexpr uint32_t kSpecVersion = 1;

void save_spectrogram(const std::string& path, const NormalizedSpectrogram& s) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    write_u32(f, kSpecMagic);
    write_u32(f, kSpecVersion);
    write_u32(f, uint32_t(s.values.rows));
    write_u32(f, uint32_t(s.values.cols));
    write_f64(f, s.frame_period_s);
    write_f64(f, s.bin_hz);
    write_f64(f, s.f0_hz);
    write_bytes(f, s.values.v.data(), s.values.v.size() * 4);
}

NormalizedSpectrogram load_spectrogram(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    if (read_u32(f) != kSpecMagic) throw IoError(path + ": bad WSPC magic");
    if (read_u32(f) != kSpecVersion) throw IoError(path + ": unsupported WSPC version");
    NormalizedSpectrogram s;
    uint32_t rows = read_u32(f), cols = read_u32(f);
    s.frame_period_s = read_f64(f);
    s.bin_hz = read_f64(f);
    s.f0_hz = read_f64(f);
    s.values = Grid(int(rows), int(cols));
    read_bytes(f, s.values.v.data(), s.values.v.size() * 4);
    return s;
}

// --- confidence map ----------------------------------------------------------

static constexpr uint32_t kCmMagic = 0x464e4357; // "WCNF"
static constexpr uint32_t kCmVersion = 1;

void save_confidence_map(const std::string& path, const ConfidenceMapFile& cm) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    write_u32(f, kCmMagic);
    write_u32(f, kCmVersion);
    write_u32(f, uint32_t(cm.values.rows));
    write_u32(f, uint32_t(cm.values.cols));
    write_f64(f, cm.frame_period_s);
    write_f64(f, cm.bin_hz);
    write_f64(f, cm.f0_hz);
    write_u64(f, cm.checkpoint_digest);
    write_u64(f, cm.spectrogram_digest);
    write_bytes(f, cm.values.v.data(), cm.values.v.size() * 4);
}

ConfidenceMapFile load_confidence_map(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    if (read_u32(f) != kCmMagic) throw IoError(path + ": bad WCNF magic");
    if (read_u32(f) != kCmVersion) throw IoError(path + ": unsupported WCNF version");
    ConfidenceMapFile cm;
    uint32_t rows = read_u32(f), cols = read_u32(f);
    cm.frame_period_s = read_f64(f);
    cm.bin_hz = read_f64(f);
    cm.f0_hz = read_f64(f);
    cm.checkpoint_digest = read_u64(f);
    cm.spectrogram_digest = read_u64(f);
    cm.values = Grid(int(rows), int(cols));
    read_bytes(f, cm.values.v.data(), cm.values.v.size() * 4);
    return cm;
}

// --- annotation TSV ----------------------------------------------------------

void save_annotations(const std::string& path, const std::vector<WhistleTrace>& traces) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open " + path + " for writing");
    bool first = true;
    for (const auto& t : traces) {
        if (!first) f << "\n";
        first = false;
        f << "#whistle " << t.id << " " << (t.species.empty() ? "unknown" : t.species) << "\n";
        char buf[64];
        for (const auto& [time_s, freq_hz] : t.points) {
            std::snprintf(buf, sizeof buf, "%.6f\t%.3f\n", time_s, freq_hz);
            f << buf;
        }
    }
    if (!f) throw IoError("write failed: " + path);
}

std::vector<WhistleTrace> load_annotations(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<WhistleTrace> traces;
    WhistleTrace cur;
    bool in_block = false;
    auto flush = [&] {
        if (in_block && !cur.points.empty()) traces.push_back(cur);
        cur = WhistleTrace{};
        in_block = false;
    };
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) { flush(); continue; }
        if (line.rfind("#whistle", 0) == 0) {
            flush();
            in_block = true;
            std::istringstream ss(line.substr(8));
            ss >> cur.id >> cur.species;
            continue;
        }
        if (line[0] == '#') continue;
        std::istringstream ss(line);
        double t, fr;
        if (!(ss >> t >> fr)) throw IoError(path + ": malformed annotation line: " + line);
        in_block = true;
        cur.points.emplace_back(t, fr);
    }
    flush();
    return traces;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(text.data(), std::streamsize(text.size()));
    if (!f) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

} // namespace waswhistle
