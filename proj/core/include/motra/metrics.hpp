#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>

#include "motra/iuv_io.hpp"
#include "motra/puppet.hpp"

namespace motra {

// Opaque deterministic image embedding with a fixed output dimension; used
// by AED and FID. The default implementation is a seeded random projection
// of the downsampled pixels, so the metric semantics need no external model.
struct EmbeddingFn {
    virtual ~EmbeddingFn() = default;
    virtual std::vector<double> embed(const Image& img) const = 0;
    virtual int dim() const = 0;
};

class RandomProjectionEmbedding final : public EmbeddingFn {
  public:
    RandomProjectionEmbedding(std::uint64_t seed, int out_dim = 64, int pool_res = 16);
    std::vector<double> embed(const Image& img) const override;
    int dim() const override { return out_dim_; }

  private:
    int out_dim_, pool_res_;
    std::vector<double> proj_;  // (out_dim, 3*pool_res*pool_res)
};

// Pluggable keypoint estimator applied to both ground-truth and generated
// frames. The default desk-scale estimator matches pixels to the puppet
// part colors and reports the per-part centroid; a part with too few
// matching pixels is reported absent.
struct KeypointEstimator {
    virtual ~KeypointEstimator() = default;
    virtual KeypointSet estimate(const Image& img) const = 0;
    virtual int n_joints() const = 0;
};

class ColorPartEstimator final : public KeypointEstimator {
  public:
    explicit ColorPartEstimator(const PuppetSpec& spec, float tol = 0.16f, int min_pixels = 6);
    KeypointSet estimate(const Image& img) const override;
    int n_joints() const override { return static_cast<int>(colors_.size()); }

  private:
    std::vector<std::array<float, 3>> colors_;
    float tol_;
    int min_pixels_;
};

// ---- Metrics ---------------------------------------------------------------

// Mean absolute difference between two images of equal size.
double l1_metric(const Image& pred, const Image& gt);

// Mean over frames of the L2 distance between embeddings of prediction and
// reference.
double aed(const std::vector<Image>& pred_frames, const std::vector<Image>& ref_frames,
           const EmbeddingFn& emb);

// Mean Euclidean distance over keypoints present in BOTH sets; pairs missing
// in either set are excluded here and only counted by MKR.
double akd(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt);

// Fraction of joints present in gt but absent in pred, averaged over frames.
double mkr(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt);

// Frechet distance between Gaussian fits of the two embedding sets:
// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}), matrix square root via
// eigendecomposition of the symmetrized product, covariances regularized by
// +1e-6 I. Throws NumericError if the regularized covariance still fails PSD.
double fid(const std::vector<Image>& set_a, const std::vector<Image>& set_b,
           const EmbeddingFn& emb);
double fid_from_embeddings(const std::vector<std::vector<double>>& a,
                           const std::vector<std::vector<double>>& b);

// ---- Evaluation protocols --------------------------------------------------

enum class Protocol { SelfReconstruction, CrossVideo };

// A generator under evaluation: source image + source IUV + driving IUV ->
// output frame at the dataset frame resolution.
using AnimatorFn = std::function<Image(const Image&, const IUVMap&, const IUVMap&)>;

struct EvalReport {
    Protocol protocol;
    // metric name -> value, in report column order
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::pair<int, int>> pairs;  // evaluated (source video, driving video)

    bool has(const std::string& name) const;
    double at(const std::string& name) const;
    std::string csv() const;
    std::string table() const;
};

// Self-reconstruction: frame 0 of each video is the source, every later
// frame of the same video is a driving frame; reports L1, FID, AED, AKD,
// MKR. Cross-video: n_pairs randomly seeded (source, driving) video pairs,
// source frame 0 animated by the full driving sequence; reports AED, AKD,
// MKR only (no pixel ground truth exists, so no L1).
EvalReport evaluate(const AnimatorFn& model, const Dataset& data, Protocol protocol, int n_pairs,
                    const EmbeddingFn& emb, const KeypointEstimator& kp, std::uint64_t seed);

// Writes report.csv, report.txt and pairs.txt under out_dir.
void write_report(const EvalReport& report, const std::string& out_dir);

}  // namespace motra
