#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "pfl/fm/transformer.hpp"

namespace pfl::fm {

// Hash over parameter names, shapes and values in declared order.
std::uint64_t weights_checksum(const FMWeights& fm);

// Immutable, shareable foundation model. Every parameter is non-trainable;
// seal() is the checksum taken at freeze time.
class FrozenFM {
public:
    FrozenFM() = default;
    explicit FrozenFM(FMWeights weights);

    const FMWeights& weights() const { return *weights_; }
    const FMConfig& config() const { return weights_->config; }
    std::uint64_t seal() const noexcept { return seal_; }
    // Recomputes the checksum and compares it with the seal.
    bool intact() const { return weights_checksum(*weights_) == seal_; }
    explicit operator bool() const noexcept { return weights_ != nullptr; }

private:
    std::shared_ptr<const FMWeights> weights_;
    std::uint64_t seal_ = 0;
};

FrozenFM freeze(FMWeights fm);

// Binary layout: "PFLFMCK1", config (7 x u64), tensor count, then per tensor
// name length, name bytes, rank, extents, f64 data; trailing FNV-1a of all
// preceding bytes. All integers and floats little-endian.
void save_ckpt(const FMWeights& fm, const std::filesystem::path& path);
FMWeights load_ckpt(const std::filesystem::path& path);

}  // namespace pfl::fm
