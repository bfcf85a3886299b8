#pragma once

#include <memory>
#include <vector>

#include "motra/nn.hpp"

namespace motra {

// Fixed (non-trained) multi-layer convolutional feature function with
// declared layer taps. The perceptual losses only rely on this contract, so
// a pretrained network can be bound in place of the default seeded stack
// without touching the loss code.
template <typename T>
struct FeatureFnT {
    virtual ~FeatureFnT() = default;
    // Feature maps at the declared taps, finest resolution first. Gradients
    // flow through the input image, never into the extractor itself.
    virtual std::vector<VarT<T>> taps(const VarT<T>& img) const = 0;
    virtual int n_taps() const = 0;
};

// Default extractor: a fixed, seeded 3-layer conv stack with taps at full,
// half and quarter resolution. Weights are frozen constants, deterministic
// given the seed, and deliberately not registered with any parameter store.
template <typename T>
class RandomConvFeaturesT final : public FeatureFnT<T> {
  public:
    explicit RandomConvFeaturesT(std::uint64_t seed, int in_ch = 3, int base = 8) {
        Rng rng = make_rng(seed, 0xFEA7ULL);
        auto make_w = [&](int oc, int ic, int k) {
            T std = static_cast<T>(std::sqrt(2.0 / (ic * k * k)));
            return VarT<T>::leaf(random_normal<T>(rng, {oc, ic, k, k}, T(0), std), false);
        };
        w1_ = make_w(base, in_ch, 3);
        b1_ = VarT<T>::leaf(TensorT<T>({base}), false);
        w2_ = make_w(2 * base, base, 3);
        b2_ = VarT<T>::leaf(TensorT<T>({2 * base}), false);
        w3_ = make_w(4 * base, 2 * base, 3);
        b3_ = VarT<T>::leaf(TensorT<T>({4 * base}), false);
    }

    std::vector<VarT<T>> taps(const VarT<T>& img) const override {
        std::vector<VarT<T>> out;
        VarT<T> h1 = ag::leaky_relu(nn::conv2d(img, w1_, b1_, 1, 1));
        out.push_back(h1);
        VarT<T> h2 = ag::leaky_relu(nn::conv2d(h1, w2_, b2_, 2, 1));
        out.push_back(h2);
        VarT<T> h3 = ag::leaky_relu(nn::conv2d(h2, w3_, b3_, 2, 1));
        out.push_back(h3);
        return out;
    }

    int n_taps() const override { return 3; }

  private:
    VarT<T> w1_, b1_, w2_, b2_, w3_, b3_;
};

using FeatureFn = FeatureFnT<float>;
using RandomConvFeatures = RandomConvFeaturesT<float>;

}  // namespace motra
