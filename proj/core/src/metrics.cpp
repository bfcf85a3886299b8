#include "motra/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "motra/nn.hpp"

namespace fs = std::filesystem;

namespace motra {

RandomProjectionEmbedding::RandomProjectionEmbedding(std::uint64_t seed, int out_dim, int pool_res)
    : out_dim_(out_dim), pool_res_(pool_res) {
    Rng rng = make_rng(seed, 0xE3BEDULL);
    std::normal_distribution<double> dist(0.0, 1.0);
    int in_dim = 3 * pool_res * pool_res;
    proj_.resize(static_cast<std::size_t>(out_dim) * in_dim);
    double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (auto& v : proj_) v = dist(rng) * scale;
}

std::vector<double> RandomProjectionEmbedding::embed(const Image& img) const {
    Tensor t = img.data;
    while (t.dim(1) / 2 >= pool_res_ && t.dim(1) % 2 == 0 && t.dim(2) % 2 == 0)
        t = nn::avg_pool2(Var::leaf(t)).val();
    if (t.dim(1) != pool_res_ || t.dim(2) != pool_res_)
        t = nn::bilinear_resize(Var::leaf(t), pool_res_, pool_res_).val();
    int in_dim = 3 * pool_res_ * pool_res_;
    std::vector<double> out(static_cast<std::size_t>(out_dim_), 0.0);
    for (int o = 0; o < out_dim_; ++o) {
        double acc = 0.0;
        const double* row = proj_.data() + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) acc += row[i] * static_cast<double>(t[i]);
        out[static_cast<std::size_t>(o)] = acc;
    }
    return out;
}

ColorPartEstimator::ColorPartEstimator(const PuppetSpec& spec, float tol, int min_pixels)
    : tol_(tol), min_pixels_(min_pixels) {
    for (const auto& p : spec.parts)
        colors_.push_back({p.color[0], p.color[1], p.color[2]});
}

KeypointSet ColorPartEstimator::estimate(const Image& img) const {
    int h = img.height(), w = img.width();
    KeypointSet out(colors_.size());
    std::vector<double> sx(colors_.size(), 0.0), sy(colors_.size(), 0.0);
    std::vector<int> count(colors_.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float r = img.data.at(0, y, x), g = img.data.at(1, y, x), b = img.data.at(2, y, x);
            for (std::size_t k = 0; k < colors_.size(); ++k) {
                // the puppet shader scales part color by {0.62, 1.0}; test both shades
                for (float shade : {1.0f, 0.62f}) {
                    float dr = r - colors_[k][0] * shade;
                    float dg = g - colors_[k][1] * shade;
                    float db = b - colors_[k][2] * shade;
                    if (dr * dr + dg * dg + db * db < tol_ * tol_) {
                        sx[k] += x;
                        sy[k] += y;
                        ++count[k];
                        break;
                    }
                }
            }
        }
    for (std::size_t k = 0; k < colors_.size(); ++k) {
        if (count[k] >= min_pixels_) {
            out[k].x = static_cast<float>(sx[k] / count[k]);
            out[k].y = static_cast<float>(sy[k] / count[k]);
            out[k].present = true;
        }
    }
    return out;
}

double l1_metric(const Image& pred, const Image& gt) {
    if (!pred.data.same_shape(gt.data)) throw ShapeError("l1_metric: image size mismatch");
    double acc = 0.0;
    for (int i = 0; i < pred.data.size(); ++i)
        acc += std::abs(static_cast<double>(pred.data[i]) - static_cast<double>(gt.data[i]));
    return acc / pred.data.size();
}

double aed(const std::vector<Image>& pred_frames, const std::vector<Image>& ref_frames,
           const EmbeddingFn& emb) {
    if (pred_frames.empty() || pred_frames.size() != ref_frames.size())
        throw ShapeError("aed: frame list mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred_frames.size(); ++i) {
        auto a = emb.embed(pred_frames[i]);
        auto b = emb.embed(ref_frames[i]);
        double d2 = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) d2 += (a[j] - b[j]) * (a[j] - b[j]);
        acc += std::sqrt(d2);
    }
    return acc / static_cast<double>(pred_frames.size());
}

double akd(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt) {
    if (pred.size() != gt.size()) throw ShapeError("akd: frame count mismatch");
    double acc = 0.0;
    long n = 0;
    for (std::size_t f = 0; f < pred.size(); ++f) {
        if (pred[f].size() != gt[f].size()) throw ShapeError("akd: joint count mismatch");
        for (std::size_t j = 0; j < pred[f].size(); ++j) {
            if (!pred[f][j].present || !gt[f][j].present) continue;
            double dx = pred[f][j].x - gt[f][j].x;
            double dy = pred[f][j].y - gt[f][j].y;
            acc += std::sqrt(dx * dx + dy * dy);
            ++n;
        }
    }
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

double mkr(const std::vector<KeypointSet>& pred, const std::vector<KeypointSet>& gt) {
    if (pred.size() != gt.size()) throw ShapeError("mkr: frame count mismatch");
    double acc = 0.0;
    for (std::size_t f = 0; f < pred.size(); ++f) {
        if (pred[f].size() != gt[f].size()) throw ShapeError("mkr: joint count mismatch");
        int gt_present = 0, missing = 0;
        for (std::size_t j = 0; j < gt[f].size(); ++j) {
            if (!gt[f][j].present) continue;
            ++gt_present;
            if (!pred[f][j].present) ++missing;
        }
        acc += gt_present > 0 ? static_cast<double>(missing) / gt_present : 0.0;
    }
    return acc / static_cast<double>(pred.size());
}

double fid_from_embeddings(const std::vector<std::vector<double>>& a,
                           const std::vector<std::vector<double>>& b) {
    if (a.empty() || b.empty()) throw ShapeError("fid: empty embedding set");
    const int d = static_cast<int>(a[0].size());
    if (static_cast<int>(b[0].size()) != d) throw ShapeError("fid: embedding dims differ");
    if (static_cast<int>(a.size()) <= d || static_cast<int>(b.size()) <= d)
        std::cerr << "[motra] warning: fid set size <= embedding dim; estimate will be noisy\n";

    auto moments = [d](const std::vector<std::vector<double>>& s, Eigen::VectorXd& mu,
                       Eigen::MatrixXd& cov) {
        const double n = static_cast<double>(s.size());
        mu = Eigen::VectorXd::Zero(d);
        for (const auto& v : s)
            for (int i = 0; i < d; ++i) mu[i] += v[static_cast<std::size_t>(i)];
        mu /= n;
        cov = Eigen::MatrixXd::Zero(d, d);
        for (const auto& v : s) {
            Eigen::VectorXd c(d);
            for (int i = 0; i < d; ++i) c[i] = v[static_cast<std::size_t>(i)] - mu[i];
            cov.noalias() += c * c.transpose();
        }
        cov /= std::max(1.0, n - 1.0);
    };

    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    moments(a, mu_a, cov_a);
    moments(b, mu_b, cov_b);
    const double eps = 1e-6;
    cov_a += eps * Eigen::MatrixXd::Identity(d, d);
    cov_b += eps * Eigen::MatrixXd::Identity(d, d);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(cov_a);
    if (es_a.eigenvalues().minCoeff() < -1e-9)
        throw NumericError("fid: covariance A not PSD after regularization");
    Eigen::VectorXd ev_a = es_a.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd sqrt_a =
        es_a.eigenvectors() * ev_a.cwiseSqrt().asDiagonal() * es_a.eigenvectors().transpose();

    Eigen::MatrixXd m = sqrt_a * cov_b * sqrt_a;  // symmetrized product
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_m(m);
    if (es_m.eigenvalues().minCoeff() < -1e-6)
        throw NumericError("fid: symmetrized product not PSD after regularization");
    double tr_sqrt = es_m.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    double mean_term = (mu_a - mu_b).squaredNorm();
    double trace_term = cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    return mean_term + trace_term;
}

double fid(const std::vector<Image>& set_a, const std::vector<Image>& set_b,
           const EmbeddingFn& emb) {
    std::vector<std::vector<double>> ea, eb;
    ea.reserve(set_a.size());
    eb.reserve(set_b.size());
    for (const auto& im : set_a) ea.push_back(emb.embed(im));
    for (const auto& im : set_b) eb.push_back(emb.embed(im));
    return fid_from_embeddings(ea, eb);
}

bool EvalReport::has(const std::string& name) const {
    for (const auto& [k, v] : metrics)
        if (k == name) return true;
    return false;
}

double EvalReport::at(const std::string& name) const {
    for (const auto& [k, v] : metrics)
        if (k == name) return v;
    throw DataError("report has no metric '" + name + "'");
}

std::string EvalReport::csv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < metrics.size(); ++i) os << (i ? "," : "") << metrics[i].first;
    os << "\n";
    os.setf(std::ios::fmtflags(0), std::ios::floatfield);
    os.precision(9);
    for (std::size_t i = 0; i < metrics.size(); ++i) os << (i ? "," : "") << metrics[i].second;
    os << "\n";
    return os.str();
}

std::string EvalReport::table() const {
    std::ostringstream os;
    os << (protocol == Protocol::SelfReconstruction ? "protocol: self-reconstruction"
                                                    : "protocol: cross-video")
       << "\n";
    for (const auto& [k, v] : metrics) {
        os.width(8);
        os << std::left << k << " ";
        os.precision(6);
        os << std::fixed << v << "\n";
        os.unsetf(std::ios::fixed);
    }
    return os.str();
}

EvalReport evaluate(const AnimatorFn& model, const Dataset& data, Protocol protocol, int n_pairs,
                    const EmbeddingFn& emb, const KeypointEstimator& kp, std::uint64_t seed) {
    if (data.empty()) throw DataError("evaluate: dataset is empty");
    EvalReport report;
    report.protocol = protocol;

    std::vector<Image> pred_frames, ref_frames, real_set;
    std::vector<KeypointSet> pred_kps, gt_kps;
    double l1_acc = 0.0;
    long l1_n = 0;

    auto run_pair = [&](int va, int vb, bool self) {
        Image src = data.load_image(va, 0);
        IUVMap src_iuv = data.load_iuv(va, 0);
        int t0 = self ? 1 : 0;
        for (int t = t0; t < data.n_frames(vb); ++t) {
            IUVMap drv = data.load_iuv(vb, t);
            Image out = model(src, src_iuv, drv);
            Image drv_frame = data.load_image(vb, t);
            if (self) {
                l1_acc += l1_metric(out, drv_frame);
                ++l1_n;
                ref_frames.push_back(drv_frame);
                real_set.push_back(drv_frame);
            } else {
                // identity reference: the source frame repeated
                ref_frames.push_back(src);
            }
            pred_frames.push_back(out);
            pred_kps.push_back(kp.estimate(out));
            gt_kps.push_back(kp.estimate(drv_frame));
        }
    };

    if (protocol == Protocol::SelfReconstruction) {
        for (int v = 0; v < data.n_videos(); ++v) {
            if (data.n_frames(v) < 2) continue;
            run_pair(v, v, true);
            report.pairs.emplace_back(v, v);
        }
        if (pred_frames.empty()) throw DataError("evaluate: no self-reconstruction pairs");
        report.metrics.emplace_back("L1", l1_acc / static_cast<double>(l1_n));
        report.metrics.emplace_back("FID", fid(pred_frames, real_set, emb));
        report.metrics.emplace_back("AED", aed(pred_frames, ref_frames, emb));
        report.metrics.emplace_back("AKD", akd(pred_kps, gt_kps));
        report.metrics.emplace_back("MKR", mkr(pred_kps, gt_kps));
    } else {
        if (data.n_videos() < 2)
            throw DataError("evaluate: cross-video protocol needs at least 2 videos");
        Rng rng = make_rng(seed, 0xCE0ULL);
        std::uniform_int_distribution<int> pick(0, data.n_videos() - 1);
        for (int p = 0; p < n_pairs; ++p) {
            int va = pick(rng), vb = pick(rng);
            while (vb == va) vb = pick(rng);
            report.pairs.emplace_back(va, vb);
            run_pair(va, vb, false);
        }
        // no pixel ground truth for animation: L1 (and FID against ground
        // truth) are omitted by contract
        report.metrics.emplace_back("AED", aed(pred_frames, ref_frames, emb));
        report.metrics.emplace_back("AKD", akd(pred_kps, gt_kps));
        report.metrics.emplace_back("MKR", mkr(pred_kps, gt_kps));
    }
    return report;
}

void write_report(const EvalReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "report.csv");
        os << report.csv();
    }
    {
        std::ofstream os(fs::path(out_dir) / "report.txt");
        os << report.table();
    }
    {
        std::ofstream os(fs::path(out_dir) / "pairs.txt");
        for (const auto& [a, b] : report.pairs) os << a << " " << b << "\n";
    }
}

}  // namespace motra
