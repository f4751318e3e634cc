#include "crvae/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "crvae/hash.hpp"

namespace crvae {

namespace {

constexpr char kMagic[5] = {'C', 'R', 'V', 'A', 'E'};
constexpr unsigned char kVersion = 1;

// Append-only byte sink that hashes as it writes.
struct Sink {
    std::vector<unsigned char> bytes;

    void put(const void* p, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void put_u8(unsigned char v) { put(&v, 1); }
    void put_u32(std::uint32_t v) { put(&v, 4); }
    void put_u64(std::uint64_t v) { put(&v, 8); }
    void put_f32s(const Tensor<float>& t) { put(t.data.data(), t.data.size() * sizeof(float)); }
};

struct Reader {
    const std::vector<unsigned char>& bytes;
    const std::string& path;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) const {
        if (pos + n > bytes.size()) {
            throw ParseError(path + ": truncated " + what + " (byte " + std::to_string(pos) + ")");
        }
    }
    void get(void* p, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    unsigned char get_u8(const char* what) {
        unsigned char v = 0;
        get(&v, 1, what);
        return v;
    }
    std::uint32_t get_u32(const char* what) {
        std::uint32_t v = 0;
        get(&v, 4, what);
        return v;
    }
    std::uint64_t get_u64(const char* what) {
        std::uint64_t v = 0;
        get(&v, 8, what);
        return v;
    }
    void get_f32s(Tensor<float>& t, const char* what) {
        get(t.data.data(), t.data.size() * sizeof(float), what);
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const TrainConfig& cfg,
                     const ModelBundle<float>& bundle, bool with_optimizer) {
    if (!(cfg.net == bundle.spec)) {
        throw ConfigError("save_checkpoint: config and bundle disagree on the network spec");
    }
    Sink s;
    s.put(kMagic, sizeof(kMagic));
    s.put_u8(kVersion);
    const std::string cfg_json = config_to_json(cfg);
    s.put_u32(static_cast<std::uint32_t>(cfg_json.size()));
    s.put(cfg_json.data(), cfg_json.size());

    // Self-describing parameter records in enumeration order.
    bundle.for_each_param([&](const std::string&, const std::string& name, const Parameter<float>& p) {
        if (!p.value.all_finite()) {
            throw NumericError("save_checkpoint: non-finite values in " + name);
        }
        s.put_u32(static_cast<std::uint32_t>(name.size()));
        s.put(name.data(), name.size());
        s.put_u8(static_cast<unsigned char>(p.value.ndim()));
        for (int d : p.value.shape) s.put_u32(static_cast<std::uint32_t>(d));
        s.put_f32s(p.value);
    });

    // Optimizer section: one presence byte per parameter, in the same order.
    s.put_u8(with_optimizer ? 1 : 0);
    if (with_optimizer) {
        bundle.for_each_param([&](const std::string&, const std::string&, const Parameter<float>& p) {
            const bool present = !p.opt.m.data.empty();
            s.put_u8(present ? 1 : 0);
            if (present) {
                s.put_u64(p.opt.t);
                s.put_f32s(p.opt.m);
                s.put_f32s(p.opt.v);
            }
        });
    }

    s.put_u64(fnv1a64(s.bytes.data(), s.bytes.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(s.bytes.data()),
              static_cast<std::streamsize>(s.bytes.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());

    Reader r{bytes, path};
    char magic[5];
    r.get(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError(path + ": bad magic (byte 0)");
    }
    const unsigned char version = r.get_u8("version");
    if (version != kVersion) {
        throw ParseError(path + ": unsupported version " + std::to_string(version));
    }
    const std::uint32_t cfg_len = r.get_u32("config length");
    r.need(cfg_len, "config JSON");
    const std::string cfg_json(reinterpret_cast<const char*>(bytes.data() + r.pos), cfg_len);
    r.pos += cfg_len;

    Checkpoint ck;
    ck.config = config_from_json(cfg_json);

    // Record names and shapes come from rebuilding the architecture; the
    // stored stream has to match them exactly, record by record.
    Rng init(ck.config.seed);
    ck.bundle = build_bundle<float>(ck.config.net, init);
    ck.bundle.disc_trained = ck.config.disc_trained;

    ck.bundle.for_each_param([&](const std::string&, const std::string& name, Parameter<float>& p) {
        const std::uint32_t nlen = r.get_u32("parameter name length");
        r.need(nlen, "parameter name");
        const std::string stored(reinterpret_cast<const char*>(bytes.data() + r.pos), nlen);
        r.pos += nlen;
        if (stored != name) {
            throw ParseError(path + ": parameter record '" + stored + "' where '" + name +
                             "' was expected (byte " + std::to_string(r.pos - nlen) + ")");
        }
        const int nd = r.get_u8("parameter rank");
        if (nd != p.value.ndim()) {
            throw ParseError(path + ": " + name + " has rank " + std::to_string(nd) +
                             ", expected " + std::to_string(p.value.ndim()));
        }
        for (int i = 0; i < nd; ++i) {
            const std::uint32_t d = r.get_u32("parameter dim");
            if (static_cast<int>(d) != p.value.shape[static_cast<std::size_t>(i)]) {
                throw ParseError(path + ": " + name + " dimension " + std::to_string(i) +
                                 " is " + std::to_string(d) + ", expected " +
                                 std::to_string(p.value.shape[static_cast<std::size_t>(i)]));
            }
        }
        r.get_f32s(p.value, name.c_str());
    });

    ck.has_optimizer = r.get_u8("optimizer flag") != 0;
    if (ck.has_optimizer) {
        ck.bundle.for_each_param([&](const std::string&, const std::string&, Parameter<float>& p) {
            if (r.get_u8("optimizer state flag") != 0) {
                p.opt.t = r.get_u64("optimizer t");
                p.opt.m = Tensor<float>::zeros(p.value.shape);
                p.opt.v = Tensor<float>::zeros(p.value.shape);
                r.get_f32s(p.opt.m, "optimizer m");
                r.get_f32s(p.opt.v, "optimizer v");
            }
        });
    }

    const std::size_t body_end = r.pos;
    const std::uint64_t stored = r.get_u64("checksum");
    if (r.pos != bytes.size()) {
        throw ParseError(path + ": " + std::to_string(bytes.size() - r.pos) +
                         " trailing bytes after checksum (byte " + std::to_string(r.pos) + ")");
    }
    const std::uint64_t actual = fnv1a64(bytes.data(), body_end);
    if (actual != stored) {
        throw ParseError(path + ": checksum mismatch (stored " + std::to_string(stored) +
                         ", computed " + std::to_string(actual) + ")");
    }
    return ck;
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open");
    Fnv1a64 h;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    }
    return h.digest();
}

}  // namespace crvae
