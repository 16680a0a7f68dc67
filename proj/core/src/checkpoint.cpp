#include "waswhistle/checkpoint.hpp"

#include <fstream>

#include "waswhistle/io.hpp"

namespace waswhistle::nn {

static constexpr uint32_t kMagic = 0x47534157; // "WASG"
static constexpr uint32_t kVersion = 1;

uint64_t Checkpoint::param_digest() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, t] : params) {
        h = fnv1a(name, h);
        h = fnv1a(t.data().data(), t.data().size() * 4, h);
    }
    for (const auto& [name, buf] : buffers) {
        h = fnv1a(name, h);
        h = fnv1a(buf.data(), buf.size() * 4, h);
    }
    return h;
}

static void write_f32_vec(std::ostream& os, const std::vector<float>& v) {
    write_u64(os, v.size());
    write_bytes(os, v.data(), v.size() * 4);
}

static std::vector<float> read_f32_vec(std::istream& is) {
    std::vector<float> v(read_u64(is));
    if (!v.empty()) read_bytes(is, v.data(), v.size() * 4);
    return v;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    write_u32(f, kMagic);
    write_u32(f, kVersion);
    write_string(f, ckpt.kind);
    write_string(f, ckpt.config_text);
    write_u64(f, ckpt.config_digest);
    write_u64(f, ckpt.iteration);

    write_u32(f, uint32_t(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        write_string(f, name);
        write_u32(f, uint32_t(t.shape().size()));
        for (int d : t.shape()) write_u32(f, uint32_t(d));
        write_bytes(f, t.data().data(), t.data().size() * 4);
    }

    write_u32(f, uint32_t(ckpt.buffers.size()));
    for (const auto& [name, buf] : ckpt.buffers) {
        write_string(f, name);
        write_f32_vec(f, buf);
    }

    write_u32(f, uint32_t(ckpt.opt_state.size()));
    write_u64(f, ckpt.adam_steps);
    for (const auto& [name, mv] : ckpt.opt_state) {
        write_string(f, name);
        write_f32_vec(f, mv.first);
        write_f32_vec(f, mv.second);
    }

    for (uint64_t s : ckpt.rng_state) write_u64(f, s);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    if (read_u32(f) != kMagic) throw IoError(path + ": bad WASG magic");
    if (read_u32(f) != kVersion) throw IoError(path + ": unsupported WASG version");
    Checkpoint c;
    c.kind = read_string(f);
    c.config_text = read_string(f);
    c.config_digest = read_u64(f);
    c.iteration = read_u64(f);

    const uint32_t np = read_u32(f);
    for (uint32_t i = 0; i < np; ++i) {
        std::string name = read_string(f);
        Shape shape(read_u32(f));
        for (auto& d : shape) d = int(read_u32(f));
        std::vector<float> data(numel(shape));
        read_bytes(f, data.data(), data.size() * 4);
        c.params.emplace_back(std::move(name), Tensor::leaf(std::move(shape), std::move(data), true));
    }

    const uint32_t nb = read_u32(f);
    for (uint32_t i = 0; i < nb; ++i) {
        std::string name = read_string(f);
        c.buffers[name] = read_f32_vec(f);
    }

    const uint32_t no = read_u32(f);
    c.adam_steps = read_u64(f);
    for (uint32_t i = 0; i < no; ++i) {
        std::string name = read_string(f);
        auto m = read_f32_vec(f);
        auto v = read_f32_vec(f);
        c.opt_state[name] = {std::move(m), std::move(v)};
    }

    for (auto& s : c.rng_state) s = read_u64(f);
    return c;
}

void assign_params(const Checkpoint& ckpt, const NamedParams& dst) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ckpt.params) by_name[name] = &t;
    for (const auto& [name, t] : dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint missing parameter " + name);
        if (it->second->shape() != t.shape())
            throw IoError("checkpoint shape mismatch for " + name);
        const_cast<Tensor&>(t).data() = it->second->data();
    }
}

void assign_buffers(const Checkpoint& ckpt, const NamedBuffers& dst) {
    for (const auto& [name, buf] : dst) {
        auto it = ckpt.buffers.find(name);
        if (it == ckpt.buffers.end()) throw IoError("checkpoint missing buffer " + name);
        *buf = it->second;
    }
}

Checkpoint snapshot(const std::string& kind, const std::string& config_text,
                    const NamedParams& params, const NamedBuffers& buffers, const Adam* opt,
                    uint64_t iteration, const Rng& rng) {
    Checkpoint c;
    c.kind = kind;
    c.config_text = config_text;
    c.config_digest = fnv1a(config_text);
    c.iteration = iteration;
    for (const auto& [name, t] : params)
        c.params.emplace_back(name, Tensor::leaf(t.shape(), t.data(), true));
    for (const auto& [name, buf] : buffers) c.buffers[name] = *buf;
    if (opt) {
        c.opt_state = opt->state();
        c.adam_steps = opt->steps();
    }
    rng.state(c.rng_state);
    return c;
}

} // namespace waswhistle::nn
