#include "motra/trainer.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace motra {

namespace {

const std::set<std::string> kAllLossTerms = {"iuv",      "rec_geo", "mask_geo",
                                             "motion",   "rec_app", "mask_app",
                                             "rec_d",    "mask_d",  "adv"};

std::set<std::string> all_groups() {
    std::set<std::string> s;
    for (const auto& g : Model::group_names()) s.insert(g);
    return s;
}

std::set<std::string> complement(const std::set<std::string>& of) {
    std::set<std::string> out;
    for (const auto& g : Model::group_names())
        if (!of.count(g)) out.insert(g);
    return out;
}

long scaled(long base, double scale) { return std::max(1L, std::lround(base * scale)); }

}  // namespace

StageSchedule StageSchedule::standard(const RunConfig& cfg) {
    StageSchedule s;
    if (cfg.stages == 1) {
        StageSpec full;
        full.name = "full";
        full.trainable = all_groups();
        full.frozen = {};
        full.iterations = scaled(600000, cfg.iter_scale);
        full.losses = kAllLossTerms;
        s.stages.push_back(std::move(full));
    } else {
        StageSpec tex;
        tex.name = "texture";
        tex.trainable = {"tex_enc", "tex_app", "tex_geo", "geo_head", "motion_enc"};
        tex.frozen = complement(tex.trainable);
        tex.iterations = scaled(100000, cfg.iter_scale);
        tex.losses = {"iuv", "rec_geo", "mask_geo"};
        s.stages.push_back(std::move(tex));

        StageSpec warp;
        warp.name = "warp";
        warp.trainable = {"motion_enc", "motion_dec", "warp_enc", "warp_gen"};
        warp.frozen = complement(warp.trainable);
        warp.iterations = scaled(100000, cfg.iter_scale);
        warp.losses = {"motion", "rec_app", "mask_app"};
        s.stages.push_back(std::move(warp));

        StageSpec full;
        full.name = "full";
        full.trainable = all_groups();
        full.frozen = {};
        full.iterations = scaled(200000, cfg.iter_scale);
        full.losses = kAllLossTerms;
        s.stages.push_back(std::move(full));

        StageSpec blend;
        blend.name = "blend";
        blend.trainable = {"blender", "disc"};
        blend.frozen = complement(blend.trainable);
        blend.iterations = scaled(200000, cfg.iter_scale);
        blend.losses = {"rec_d", "mask_d", "adv"};
        s.stages.push_back(std::move(blend));
    }
    if (!cfg.enable_adv)
        for (auto& st : s.stages) st.losses.erase("adv");
    return s;
}

void StageSchedule::validate() const {
    if (stages.empty()) throw ConfigError("schedule: no stages");
    std::set<std::string> groups = all_groups();
    for (const auto& st : stages) {
        if (st.iterations < 1) throw ConfigError("schedule: stage '" + st.name + "' has no iterations");
        if (st.trainable.empty()) throw ConfigError("schedule: stage '" + st.name + "' trains nothing");
        for (const auto& g : st.trainable)
            if (!groups.count(g))
                throw ConfigError("schedule: unknown module group '" + g + "'");
        for (const auto& g : st.frozen)
            if (!groups.count(g))
                throw ConfigError("schedule: unknown module group '" + g + "'");
        for (const auto& g : st.trainable)
            if (st.frozen.count(g))
                throw ConfigError("schedule: group '" + g + "' both trainable and frozen in stage '" +
                                  st.name + "'");
        for (const auto& g : groups)
            if (!st.trainable.count(g) && !st.frozen.count(g))
                throw ConfigError("schedule: group '" + g + "' unassigned in stage '" + st.name + "'");
        for (const auto& l : st.losses)
            if (!kAllLossTerms.count(l))
                throw ConfigError("schedule: unknown loss term '" + l + "'");
    }
}

Adam::Adam(ParamRegistry& reg, std::vector<std::string> names, const OptimConfig& cfg)
    : reg_(reg), names_(std::move(names)), cfg_(cfg) {
    for (const auto& n : names_) {
        m_.emplace_back(reg_.at(n).val().shape());
        v_.emplace_back(reg_.at(n).val().shape());
    }
}

void Adam::step() {
    ++t_;
    float b1t = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    float b2t = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (std::size_t i = 0; i < names_.size(); ++i) {
        Var& p = reg_.at(names_[i]);
        const Tensor& g = p.grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        Tensor& w = p.val_mut();
        for (int j = 0; j < w.size(); ++j) {
            float gj = g[j];
            m[j] = cfg_.beta1 * m[j] + (1.0f - cfg_.beta1) * gj;
            v[j] = cfg_.beta2 * v[j] + (1.0f - cfg_.beta2) * gj * gj;
            float mhat = m[j] / b1t;
            float vhat = v[j] / b2t;
            w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (const auto& n : names_) reg_.at(n).zero_grad();
}

void save_checkpoint(const ParamRegistry& reg, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os << "MTCK 1 " << reg.size() << "\n";
    for (const auto& name : reg.names()) {
        const Tensor& t = reg.at(name).val();
        os << name << " f32";
        os << " " << t.ndim();
        for (int d = 0; d < t.ndim(); ++d) os << " " << t.dim(d);
        os << "\n";
    }
    os << "DATA\n";
    for (const auto& name : reg.names()) {
        const Tensor& t = reg.at(name).val();
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(sizeof(float)) * t.size());
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

void load_checkpoint(ParamRegistry& reg, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    is >> magic >> version >> count;
    if (magic != "MTCK" || version != 1)
        throw DataError("not a checkpoint file (bad magic/version): " + path);
    if (count != reg.size())
        throw DataError("checkpoint parameter count " + std::to_string(count) +
                        " != model parameter count " + std::to_string(reg.size()));
    struct Entry {
        std::string name;
        std::vector<int> shape;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < count; ++i) {
        Entry e;
        std::string dtype;
        int ndim = 0;
        is >> e.name >> dtype >> ndim;
        if (dtype != "f32") throw DataError("checkpoint: unsupported dtype " + dtype);
        e.shape.resize(static_cast<std::size_t>(ndim));
        for (int d = 0; d < ndim; ++d) is >> e.shape[static_cast<std::size_t>(d)];
        if (!is) throw DataError("checkpoint: truncated manifest in " + path);
        entries.push_back(std::move(e));
    }
    std::string data_tag;
    is >> data_tag;
    if (data_tag != "DATA") throw DataError("checkpoint: missing DATA section in " + path);
    is.get();  // consume newline
    for (const auto& e : entries) {
        if (!reg.contains(e.name))
            throw DataError("checkpoint parameter '" + e.name + "' does not exist in this model");
        Var& p = reg.at(e.name);
        if (p.val().shape() != e.shape)
            throw DataError("checkpoint parameter '" + e.name + "' has shape " +
                            Tensor::shape_str(e.shape) + " but model expects " +
                            Tensor::shape_str(p.val().shape()));
        is.read(reinterpret_cast<char*>(p.val_mut().data()),
                static_cast<std::streamsize>(sizeof(float)) * p.val().size());
        if (is.gcount() != static_cast<std::streamsize>(sizeof(float)) * p.val().size())
            throw DataError("checkpoint: truncated data for parameter '" + e.name + "'");
    }
}

namespace {

struct PreparedFrame {
    Tensor img_out;      // (3,out,out)
    Tensor img_work;     // (3,work,work)
    Tensor mask_out;     // (1,out,out)
    OneHotIUV onehot_work;
};

struct PreparedPair {
    int video = 0;
    int t = 0;
};

struct Batcher {
    std::vector<std::vector<PreparedFrame>> frames;  // [video][t]
    std::vector<PreparedPair> pairs;

    void prepare(const Dataset& ds, const RunConfig& cfg) {
        frames.resize(static_cast<std::size_t>(ds.n_videos()));
        for (int v = 0; v < ds.n_videos(); ++v) {
            for (int t = 0; t < ds.n_frames(v); ++t) {
                PreparedFrame f;
                Image img = ds.load_image(v, t);
                Tensor out_res = img.data;
                while (out_res.dim(1) > cfg.output_res)
                    out_res = nn::avg_pool2(Var::leaf(out_res)).val();
                if (out_res.dim(1) != cfg.output_res)
                    out_res = nn::bilinear_resize(Var::leaf(out_res), cfg.output_res, cfg.output_res)
                                  .val();
                f.img_out = out_res;
                f.img_work = image_to_working_res(img.data, cfg.working_res);
                Mask m = ds.load_mask(v, t);
                Tensor mask = m.values;
                while (mask.dim(1) > cfg.output_res) mask = nn::avg_pool2(Var::leaf(mask)).val();
                if (mask.dim(1) != cfg.output_res)
                    mask = nn::bilinear_resize(Var::leaf(mask), cfg.output_res, cfg.output_res).val();
                f.mask_out = mask;
                f.onehot_work = iuv_to_onehot(iuv_to_working_res(ds.load_iuv(v, t), cfg.working_res));
                frames[static_cast<std::size_t>(v)].push_back(std::move(f));
            }
        }
        for (auto [v, t] : ds.self_pairs()) pairs.push_back({v, t});
        if (pairs.empty()) throw DataError("training dataset has no (source,driving) pairs");
    }
};

struct TermAccum {
    std::map<std::string, Var> sums;

    void add(const std::string& name, const Var& v) {
        auto it = sums.find(name);
        if (it == sums.end())
            sums.emplace(name, v);
        else
            it->second = ag::add(it->second, v);
    }
};

}  // namespace

Trainer::Trainer(Model& model, const RunConfig& cfg)
    : model_(model), cfg_(cfg), fx_(cfg.fx_seed) {
    weights_.cor = cfg.lambda_cor;
    weights_.reg = cfg.lambda_reg;
    weights_.tv = cfg.lambda_tv;
    weights_.con = cfg.lambda_con;
    weights_.uv = cfg.lambda_uv;
    weights_.ce = cfg.lambda_ce;
    weights_.p = cfg.lambda_p;
    weights_.l1 = cfg.lambda_1;
}

TrainResult Trainer::train(const Dataset& data, const StageSchedule& schedule,
                           const OptimConfig& optim, const std::string& out_dir, bool resume,
                           const TrainHooks* hooks) {
    schedule.validate();
    if (data.empty()) throw DataError("train: dataset is empty");
    fs::create_directories(out_dir);

    Batcher batcher;
    batcher.prepare(data, cfg_);

    ParamRegistry& reg = model_.params();

    int start_stage = 0;
    if (resume) {
        for (int i = static_cast<int>(schedule.stages.size()); i >= 1; --i) {
            std::string ck = (fs::path(out_dir) / ("checkpoint_stage" + std::to_string(i) + ".ckpt")).string();
            if (fs::exists(ck)) {
                load_checkpoint(reg, ck);
                start_stage = i;
                break;
            }
        }
    }

    std::string log_path = (fs::path(out_dir) / "loss.csv").string();
    std::ofstream log(log_path, resume && start_stage > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot open loss log: " + log_path);
    if (!(resume && start_stage > 0)) log << "iter,stage,term,value\n";

    TrainResult result;
    result.loss_log = log_path;

    long global_iter = 0;
    for (int i = 0; i < start_stage; ++i) global_iter += schedule.stages[static_cast<std::size_t>(i)].iterations;

    for (std::size_t si = static_cast<std::size_t>(start_stage); si < schedule.stages.size(); ++si) {
        const StageSpec& stage = schedule.stages[si];
        if (hooks && hooks->on_stage_start) hooks->on_stage_start(static_cast<int>(si), stage);

        // freeze: trainable params get gradients, frozen stay constants
        reg.set_requires_grad_all(false);
        std::vector<std::string> gen_names, disc_names;
        for (const auto& g : stage.trainable) {
            auto names = model_.group_params(g);
            reg.set_requires_grad(names, true);
            auto& sink = (g == "disc") ? disc_names : gen_names;
            sink.insert(sink.end(), names.begin(), names.end());
        }
        const bool adv = stage.losses.count("adv") > 0 && !disc_names.empty();

        // pre-stage snapshot of frozen parameters for the bit-exact check
        std::vector<std::pair<std::string, Tensor>> frozen_snapshot;
        for (const auto& g : stage.frozen)
            for (const auto& n : model_.group_params(g))
                frozen_snapshot.emplace_back(n, reg.at(n).val());

        Adam adam_gen(reg, gen_names, optim);
        Adam adam_disc(reg, disc_names, optim);
        Rng rng = make_rng(optim.seed, 1000 + si);
        std::uniform_int_distribution<std::size_t> pick(0, batcher.pairs.size() - 1);

        for (long it = 0; it < stage.iterations; ++it) {
            ++global_iter;
            reg.zero_grad_all();

            std::vector<PreparedPair> batch;
            for (int b = 0; b < optim.batch_size; ++b) batch.push_back(batcher.pairs[pick(rng)]);

            TermAccum acc;
            std::vector<Var> fakes;       // generator output images (graph-backed)
            std::vector<const Tensor*> reals;

            for (const auto& pr : batch) {
                const PreparedFrame& src = batcher.frames[static_cast<std::size_t>(pr.video)][0];
                const PreparedFrame& drv =
                    batcher.frames[static_cast<std::size_t>(pr.video)][static_cast<std::size_t>(pr.t)];
                Var src_img = ag::constant(src.img_work);
                Var gt_out = ag::constant(drv.img_out);
                Var gt_mask = ag::constant(drv.mask_out);
                Var mask_sp = gt_mask;  // (1,out,out) spatial multiplier

                const bool need_motion_pyramid =
                    stage.losses.count("motion") || stage.losses.count("rec_app") ||
                    stage.losses.count("mask_app") || stage.losses.count("rec_d") ||
                    stage.losses.count("mask_d") || adv;
                const bool need_tex = stage.losses.count("iuv") || stage.losses.count("rec_geo") ||
                                      stage.losses.count("mask_geo") || stage.losses.count("rec_d") ||
                                      stage.losses.count("mask_d") || adv;
                const bool need_blend =
                    stage.losses.count("rec_d") || stage.losses.count("mask_d") || adv;

                Var alpha, rho;
                MotionOutT<float> motion;
                if (need_motion_pyramid) {
                    motion = model_.motion_net().forward(src_img, src.onehot_work, drv.onehot_work);
                    alpha = motion.alpha;
                    rho = motion.rho;
                } else {
                    auto sig = model_.motion_net().encode_signals(
                        motion_input(src_img, src.onehot_work, drv.onehot_work));
                    alpha = sig.first;
                    rho = sig.second;
                }

                if (stage.losses.count("motion")) {
                    Var tgt_img = ag::constant(drv.img_work);
                    Var cor = ag::scalar<float>(0.0f);
                    Var reg_t = ag::scalar<float>(0.0f);
                    Var tv = ag::scalar<float>(0.0f);
                    float inv_l = 1.0f / static_cast<float>(motion.flows.size());
                    for (const auto& f : motion.flows) {
                        if (cfg_.enable_correctness)
                            cor = ag::add(cor, ag::mul_scalar(
                                                   perceptual_correctness(f, src_img, tgt_img, fx_),
                                                   inv_l));
                        if (cfg_.enable_affine_reg)
                            reg_t = ag::add(reg_t, ag::mul_scalar(affine_reg(f), inv_l));
                        tv = ag::add(tv, ag::mul_scalar(tv_loss(f), inv_l));
                    }
                    Var con = consistency_loss(motion.flows);
                    acc.add("motion", motion_loss(cor, reg_t, tv, con, weights_));
                }

                WarpOutT<float> warp;
                if (need_motion_pyramid && (stage.losses.count("rec_app") ||
                                            stage.losses.count("mask_app") || need_blend)) {
                    warp = model_.warp_branch().forward(src_img, motion.flows, motion.occs);
                    if (stage.losses.count("rec_app"))
                        acc.add("rec_app",
                                pyramid_perceptual_rec(warp.image, gt_out, fx_, weights_,
                                                       cfg_.rec_scales));
                    if (stage.losses.count("mask_app"))
                        acc.add("mask_app", mask_bce(warp.mask, gt_mask));
                }

                TexOutT<float> tex;
                if (need_tex) {
                    tex = model_.texture_branch().forward(src_img, src.onehot_work, alpha, rho);
                    if (stage.losses.count("iuv"))
                        acc.add("iuv", iuv_loss(tex.u_hat, tex.v_hat, tex.s_hat, drv.onehot_work,
                                                weights_, cfg_.uv_mask_detach));
                    if (stage.losses.count("rec_geo")) {
                        // foreground-masked reconstruction: texture mapping only
                        // explains pixels inside the human region
                        Var pred_m = ag::mul_spatial(tex.image, mask_sp);
                        Var gt_m = ag::mul_spatial(gt_out, mask_sp);
                        acc.add("rec_geo",
                                pyramid_perceptual_rec(pred_m, gt_m, fx_, weights_, cfg_.rec_scales));
                    }
                    if (stage.losses.count("mask_geo"))
                        acc.add("mask_geo", mask_bce(tex.mask, gt_mask));
                }

                if (need_blend) {
                    BlendOutT<float> blend =
                        model_.blender_net().forward(tex.z_geo, warp.z_app, warp.image);
                    if (stage.losses.count("rec_d")) {
                        auto rec = pyramid_perceptual_rec_parts(blend.image, gt_out, fx_, weights_,
                                                                cfg_.rec_scales);
                        acc.add("rec_d", rec.total);
                        acc.add("l1_d", rec.l1);
                    }
                    if (stage.losses.count("mask_d")) acc.add("mask_d", mask_bce(blend.mask, gt_mask));
                    if (adv) {
                        fakes.push_back(blend.image);
                        reals.push_back(&drv.img_out);
                    }
                }
            }

            float inv_b = 1.0f / static_cast<float>(optim.batch_size);
            std::map<std::string, float> logged;

            // discriminator step first (fakes detached)
            if (adv && !fakes.empty()) {
                Var d_loss = ag::scalar<float>(0.0f);
                for (std::size_t b = 0; b < fakes.size(); ++b) {
                    Var d_real = model_.discriminator().forward(ag::constant(*reals[b]));
                    Var d_fake = model_.discriminator().forward(ag::detach(fakes[b]));
                    d_loss = ag::add(d_loss, lsgan_d_loss(d_real, d_fake));
                }
                d_loss = ag::mul_scalar(d_loss, 1.0f / static_cast<float>(fakes.size()));
                d_loss.backward();
                adam_disc.step();
                logged["adv_d"] = d_loss.val()[0];
                reg.zero_grad_all();
                if (hooks && hooks->after_d_step) hooks->after_d_step(model_, global_iter);
            }

            // generator step; the discriminator participates as a constant
            if (adv && !fakes.empty()) {
                reg.set_requires_grad(model_.group_params("disc"), false);
                Var g_adv = ag::scalar<float>(0.0f);
                for (const auto& fake : fakes)
                    g_adv = ag::add(g_adv, lsgan_g_loss(model_.discriminator().forward(fake)));
                g_adv = ag::mul_scalar(g_adv, 1.0f / static_cast<float>(fakes.size()));
                acc.add("adv_g_batchsum", ag::mul_scalar(g_adv, static_cast<float>(optim.batch_size)));
            }

            Var total;
            for (auto& [name, sum] : acc.sums) {
                if (name == "l1_d") continue;  // component, logged but not re-added
                Var term = ag::mul_scalar(sum, inv_b);
                total = total.defined() ? ag::add(total, term) : term;
            }
            if (!total.defined()) throw ConfigError("stage '" + stage.name + "' produced no losses");
            total.backward();
            if (hooks && hooks->after_g_backward) hooks->after_g_backward(model_, global_iter);
            adam_gen.step();
            if (adv) reg.set_requires_grad(model_.group_params("disc"), true);

            // logging + NaN guard
            float rec_total = 0.0f;
            for (const auto& [name, sum] : acc.sums) {
                std::string out_name = name == "adv_g_batchsum" ? "adv_g" : name;
                float v = sum.val()[0] * inv_b;
                logged[out_name] = v;
                if (out_name == "rec_app" || out_name == "rec_geo" || out_name == "rec_d")
                    rec_total += v;
            }
            logged["rec_total"] = rec_total;
            logged["total"] = total.val()[0];
            for (const auto& [name, v] : logged)
                if (!std::isfinite(v))
                    throw NumericError("loss term '" + name + "' is non-finite at iteration " +
                                       std::to_string(global_iter) + " (stage " + stage.name + ")");
            char buf[64];
            for (const auto& [name, v] : logged) {
                std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
                log << global_iter << "," << stage.name << "," << name << "," << buf << "\n";
            }
        }

        // bit-exact freezing contract
        for (const auto& [name, snap] : frozen_snapshot) {
            const Tensor& now = reg.at(name).val();
            if (std::memcmp(now.data(), snap.data(), sizeof(float) * static_cast<std::size_t>(now.size())) != 0)
                throw NumericError("frozen parameter '" + name + "' changed during stage '" +
                                   stage.name + "'");
        }

        std::string ck =
            (fs::path(out_dir) / ("checkpoint_stage" + std::to_string(si + 1) + ".ckpt")).string();
        save_checkpoint(reg, ck);
        result.stage_checkpoints.push_back(ck);
        if (hooks && hooks->on_stage_end) hooks->on_stage_end(static_cast<int>(si), stage);
    }

    reg.set_requires_grad_all(true);
    result.final_checkpoint = (fs::path(out_dir) / "checkpoint_final.ckpt").string();
    save_checkpoint(reg, result.final_checkpoint);
    result.iterations_run = global_iter;
    log.flush();
    return result;
}

}  // namespace motra
