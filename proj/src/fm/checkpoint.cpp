#include "pfl/fm/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "pfl/errors.hpp"
#include "pfl/hash.hpp"

namespace pfl::fm {

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'F', 'L', 'F', 'M', 'C', 'K', '1'};

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
        }
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    std::vector<unsigned char>& buffer() { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class Reader {
public:
    Reader(const std::vector<unsigned char>& buf, std::size_t end, std::string file)
        : buf_(buf), end_(end), file_(std::move(file)) {}

    void bytes(void* out, std::size_t n) {
        need(n);
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        }
        pos_ += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    bool done() const { return pos_ == end_; }
    [[noreturn]] void fail(const std::string& what) const {
        throw CorruptionError("checkpoint " + file_ + ": " + what);
    }

private:
    void need(std::size_t n) const {
        if (end_ - pos_ < n) {
            fail("truncated");
        }
    }
    const std::vector<unsigned char>& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
    std::string file_;
};

std::uint64_t fnv(const unsigned char* p, std::size_t n) {
    Fnv1a h;
    h.update(p, n);
    return h.digest();
}

}  // namespace

std::uint64_t weights_checksum(const FMWeights& fm) {
    Fnv1a h;
    for (const Parameter* p : fm.parameters()) {
        h.update(p->name);
        h.update_u64(p->value.rank());
        for (std::size_t extent : p->value.shape()) {
            h.update_u64(extent);
        }
        for (double v : p->value.values()) {
            h.update_f64(v);
        }
    }
    return h.digest();
}

FrozenFM::FrozenFM(FMWeights weights) {
    weights.set_trainable(false);
    for (Parameter* p : weights.parameters()) {
        p->grad = Tensor();
        p->reset_optimizer();
    }
    seal_ = weights_checksum(weights);
    weights_ = std::make_shared<const FMWeights>(std::move(weights));
}

FrozenFM freeze(FMWeights fm) { return FrozenFM(std::move(fm)); }

void save_ckpt(const FMWeights& fm, const std::filesystem::path& path) {
    Writer w;
    w.bytes(kMagic.data(), kMagic.size());
    const FMConfig& c = fm.config;
    for (std::uint64_t v : {std::uint64_t{c.n_vars}, std::uint64_t{c.d_model}, std::uint64_t{c.n_heads},
                            std::uint64_t{c.n_layers}, std::uint64_t{c.d_ff}, std::uint64_t{c.max_seq_len},
                            c.seed}) {
        w.u64(v);
    }
    const auto params = fm.parameters();
    w.u64(params.size());
    for (const Parameter* p : params) {
        w.u64(p->name.size());
        w.bytes(p->name.data(), p->name.size());
        w.u64(p->value.rank());
        for (std::size_t extent : p->value.shape()) {
            w.u64(extent);
        }
        for (double v : p->value.values()) {
            w.f64(v);
        }
    }
    auto& buf = w.buffer();
    w.u64(fnv(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

FMWeights load_ckpt(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < kMagic.size() + 8) {
        throw CorruptionError("checkpoint " + path.string() + ": truncated");
    }
    const std::size_t body = buf.size() - 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) {
        stored |= static_cast<std::uint64_t>(buf[body + i]) << (8 * i);
    }
    if (stored != fnv(buf.data(), body)) {
        throw CorruptionError("checkpoint " + path.string() + ": checksum mismatch");
    }

    Reader r(buf, body, path.string());
    std::array<char, 8> magic{};
    r.bytes(magic.data(), magic.size());
    if (magic != kMagic) {
        r.fail("bad magic");
    }
    FMConfig c;
    c.n_vars = r.u64();
    c.d_model = r.u64();
    c.n_heads = r.u64();
    c.n_layers = r.u64();
    c.d_ff = r.u64();
    c.max_seq_len = r.u64();
    c.seed = r.u64();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        r.fail(e.what());
    }
    FMWeights fm = init_fm(c);
    auto params = fm.parameters();
    if (r.u64() != params.size()) {
        r.fail("tensor count does not match the config");
    }
    for (Parameter* p : params) {
        const std::uint64_t name_len = r.u64();
        if (name_len > 4096) {
            r.fail("implausible name length");
        }
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        if (name != p->name) {
            r.fail("expected tensor " + p->name + ", found " + name);
        }
        const std::uint64_t rank = r.u64();
        if (rank != p->value.rank()) {
            r.fail("rank mismatch for " + name);
        }
        for (std::size_t extent : p->value.shape()) {
            if (r.u64() != extent) {
                r.fail("shape mismatch for " + name);
            }
        }
        for (double& v : p->value.values()) {
            v = r.f64();
        }
        if (!p->value.all_finite()) {
            r.fail("non-finite values in " + name);
        }
    }
    if (!r.done()) {
        r.fail("trailing bytes");
    }
    return fm;
}

}  // namespace pfl::fm
