#pragma once
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "waswhistle/grid.hpp"

namespace waswhistle {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- little-endian binary primitives ------------------------------------

void write_u32(std::ostream& os, uint32_t v);
void write_u64(std::ostream& os, uint64_t v);
void write_f32(std::ostream& os, float v);
void write_f64(std::ostream& os, double v);
void write_bytes(std::ostream& os, const void* p, size_t n);
void write_string(std::ostream& os, const std::string& s); // u32 length + bytes

uint32_t read_u32(std::istream& is);
uint64_t read_u64(std::istream& is);
float read_f32(std::istream& is);
double read_f64(std::istream& is);
void read_bytes(std::istream& is, void* p, size_t n);
std::string read_string(std::istream& is);

// --- digests -------------------------------------------------------------

// FNV-1a 64-bit over raw bytes; used for config and artifact digests.
uint64_t fnv1a(const void* p, size_t n, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL);
std::string digest_hex(uint64_t d);
uint64_t file_digest(const std::string& path);

// --- spectrogram cache (magic WSPC) ---------------------------------------

void save_spectrogram(const std::string& path, const NormalizedSpectrogram& s);
NormalizedSpectrogram load_spectrogram(const std::string& path);

// --- confidence map file (magic WCNF) --------------------------------------

struct ConfidenceMapFile {
    Grid values;
    uint64_t checkpoint_digest = 0;
    uint64_t spectrogram_digest = 0;
    double frame_period_s = 0.002;
    double bin_hz = 125.0;
    double f0_hz = 5000.0;
};

void save_confidence_map(const std::string& path, const ConfidenceMapFile& cm);
ConfidenceMapFile load_confidence_map(const std::string& path);

// --- annotation TSV --------------------------------------------------------
// Blocks separated by blank lines. Block header: "#whistle <id> <species>",
// then one "time_s<TAB>freq_hz" line per point.

void save_annotations(const std::string& path, const std::vector<WhistleTrace>& traces);
std::vector<WhistleTrace> load_annotations(const std::string& path);

// --- misc -------------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

} // namespace waswhistle
