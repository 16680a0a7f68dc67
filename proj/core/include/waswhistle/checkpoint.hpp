#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "waswhistle/nn.hpp"

namespace waswhistle::nn {

// Serialized network state: versioned, with a config digest so downstream
// stages can verify checkpoint compatibility.
struct Checkpoint {
    uint64_t config_digest = 0;
    uint64_t iteration = 0;
    NamedParams params;
    std::map<std::string, std::vector<float>> buffers;
    std::map<std::string, std::pair<std::vector<float>, std::vector<float>>> opt_state;
    uint64_t adam_steps = 0;
    uint64_t rng_state[5] = {0, 0, 0, 0, 0};
    std::string kind; // "noise-gan", "contour-gan", "fusion", "extractor", ...
    std::string config_text; // the flat key-value config the digest covers

    // digest over all parameter bytes; identifies the trained artifact
    uint64_t param_digest() const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// copy values from ckpt.params into dst by name; throws on missing/shape mismatch
void assign_params(const Checkpoint& ckpt, const NamedParams& dst);
void assign_buffers(const Checkpoint& ckpt, const NamedBuffers& dst);

Checkpoint snapshot(const std::string& kind, const std::string& config_text,
                    const NamedParams& params, const NamedBuffers& buffers, const Adam* opt,
                    uint64_t iteration, const Rng& rng);

} // namespace waswhistle::nn
