// motra: one-shot human motion transfer on DensePose-style IUV maps.
// Subcommands: synth (puppet dataset), train, animate, eval.
//
// Configuration resolution order: built-in defaults, then --set key=value
// flags, then the --config file (the file has the last word).
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric abort.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "motra/metrics.hpp"
#include "motra/model.hpp"
#include "motra/trainer.hpp"

namespace fs = std::filesystem;
using namespace motra;

namespace {

RunConfig resolve_config(const std::vector<std::string>& sets, const std::string& config_file) {
    RunConfig cfg;
    for (const auto& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!config_file.empty()) cfg.load_file(config_file);
    cfg.validate();
    return cfg;
}

int run_synth(const std::string& spec_path, std::uint64_t seed, int frames, int videos,
              int canvas, const std::string& out, bool force) {
    PuppetSpec spec = spec_path.empty() ? PuppetSpec::default_spec(canvas)
                                        : PuppetSpec::from_file(spec_path);
    spec.validate();
    fs::path root(out);
    if (fs::exists(root) && !fs::is_empty(root)) {
        if (!force) throw DataError("output directory exists and is not empty (use --force): " + out);
        fs::remove_all(root);
    }
    fs::create_directories(root / "train");
    char buf[32];
    for (int v = 0; v < videos; ++v) {
        auto records = synth_sequence(spec, seed + static_cast<std::uint64_t>(v), frames);
        std::snprintf(buf, sizeof(buf), "video_%03d", v);
        write_video_dir((root / "train" / buf).string(), records);
    }
    std::ofstream manifest(root / "manifest.txt");
    manifest << "videos " << videos << "\n";
    manifest << "frames_per_video " << frames << "\n";
    manifest << "canvas " << spec.canvas << "\n";
    manifest << "seed " << seed << "\n";
    std::cout << "wrote " << videos << " video(s) x " << frames << " frames to " << out << "\n";
    return 0;
}

int run_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out,
              bool resume) {
    Dataset ds = Dataset::open(data_dir, "train");
    if (ds.empty()) throw DataError("no training videos under " + data_dir + "/train");
    Model model(cfg, cfg.seed);
    Trainer trainer(model, cfg);
    StageSchedule schedule = StageSchedule::standard(cfg);
    OptimConfig optim = OptimConfig::from(cfg);
    fs::create_directories(out);
    {
        std::ofstream cf(fs::path(out) / "config.cfg");
        cf << cfg.describe();
    }
    TrainResult res = trainer.train(ds, schedule, optim, out, resume);
    std::cout << "trained " << res.iterations_run << " iterations; final checkpoint "
              << res.final_checkpoint << "\n";
    return 0;
}

RunConfig config_for_checkpoint(const std::string& checkpoint,
                                const std::vector<std::string>& sets,
                                const std::string& config_file) {
    if (!config_file.empty()) return resolve_config(sets, config_file);
    fs::path sibling = fs::path(checkpoint).parent_path() / "config.cfg";
    if (fs::exists(sibling)) return resolve_config(sets, sibling.string());
    return resolve_config(sets, "");
}

// Full generator forward for one (source, source IUV, driving IUV) triple.
Image animate_frame(const Model& model, const RunConfig& cfg, const Image& src,
                    const IUVMap& src_iuv, const IUVMap& drv_iuv, Mask* mask_out = nullptr) {
    Var src_work = ag::constant(image_to_working_res(src.data, cfg.working_res));
    OneHotIUV p_src = iuv_to_onehot(iuv_to_working_res(src_iuv, cfg.working_res));
    OneHotIUV p_drv = iuv_to_onehot(iuv_to_working_res(drv_iuv, cfg.working_res));
    auto out = model.forward(src_work, p_src, p_drv);
    if (mask_out) *mask_out = Mask{out.blend.mask.val()};
    return Image(out.blend.image.val());
}

int run_animate(const RunConfig& cfg, const std::string& checkpoint, const std::string& src_image,
                const std::string& src_iuv_path, const std::string& driving_dir,
                const std::string& out) {
    Model model(cfg, cfg.seed);
    load_checkpoint(model.params(), checkpoint);
    model.params().set_requires_grad_all(false);

    Image src = read_ppm(src_image);
    IUVMap src_iuv = read_iuvz(src_iuv_path);

    std::vector<fs::path> iuvs;
    for (const auto& e : fs::directory_iterator(driving_dir))
        if (e.path().extension() == ".iuvz") iuvs.push_back(e.path());
    std::sort(iuvs.begin(), iuvs.end());
    if (iuvs.empty()) throw DataError("no .iuvz files in " + driving_dir);

    fs::create_directories(out);
    char buf[32];
    for (std::size_t i = 0; i < iuvs.size(); ++i) {
        IUVMap drv = read_iuvz(iuvs[i].string());
        Mask mask;
        Image frame = animate_frame(model, cfg, src, src_iuv, drv, &mask);
        std::snprintf(buf, sizeof(buf), "%06zu", i);
        write_ppm(frame, (fs::path(out) / ("frame_" + std::string(buf) + ".ppm")).string());
        write_pgm(mask, (fs::path(out) / ("mask_" + std::string(buf) + ".pgm")).string());
    }
    std::cout << "wrote " << iuvs.size() << " frame(s) to " << out << "\n";
    return 0;
}

int run_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_dir,
             const std::string& split, const std::string& protocol_name, int pairs,
             const std::string& out) {
    Dataset ds = Dataset::open(data_dir, split);
    if (ds.empty()) throw DataError("no videos under " + data_dir + "/" + split);
    Protocol protocol;
    if (protocol_name == "self-reconstruction")
        protocol = Protocol::SelfReconstruction;
    else if (protocol_name == "cross-video")
        protocol = Protocol::CrossVideo;
    else
        throw ConfigError("unknown protocol '" + protocol_name +
                          "' (expected self-reconstruction or cross-video)");

    Model model(cfg, cfg.seed);
    load_checkpoint(model.params(), checkpoint);
    model.params().set_requires_grad_all(false);

    int frame_res = read_ppm(ds.videos()[0].frames[0].image_path).height();
    AnimatorFn fn = [&](const Image& src, const IUVMap& si, const IUVMap& di) {
        Image o = animate_frame(model, cfg, src, si, di);
        if (o.height() != frame_res)
            o = Image(nn::bilinear_resize(Var::leaf(o.data), frame_res, frame_res).val());
        return o;
    };

    RandomProjectionEmbedding emb(cfg.embed_seed, cfg.embed_dim);
    ColorPartEstimator kp(PuppetSpec::default_spec());
    EvalReport report = evaluate(fn, ds, protocol, pairs, emb, kp, cfg.seed);
    write_report(report, out);
    std::cout << report.table();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"one-shot human motion transfer (flow warping + neural texture mapping)"};
    app.require_subcommand(1);

    std::vector<std::string> sets;
    std::string config_file;

    auto* synth = app.add_subcommand("synth", "generate a synthetic puppet dataset");
    std::string synth_spec, synth_out;
    std::uint64_t synth_seed = 0;
    int synth_frames = 16, synth_videos = 1, synth_canvas = 128;
    bool synth_force = false;
    synth->add_option("--spec", synth_spec, "puppet spec file (default: built-in 6-part puppet)");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--frames", synth_frames, "frames per video")->check(CLI::Range(2, 100000));
    synth->add_option("--videos", synth_videos, "number of videos")->check(CLI::PositiveNumber);
    synth->add_option("--canvas", synth_canvas, "canvas size for the built-in spec");
    synth->add_option("--out", synth_out, "output dataset root")->required();
    synth->add_flag("--force", synth_force, "overwrite an existing non-empty output directory");

    auto* train = app.add_subcommand("train", "run the multi-stage training schedule");
    std::string train_data, train_out;
    bool train_resume = false;
    train->add_option("--config", config_file, "config file (overrides --set and defaults)");
    train->add_option("--set", sets, "config override key=value (applied before --config)");
    train->add_option("--data", train_data, "dataset root")->required();
    train->add_option("--out", train_out, "run output directory")->required();
    train->add_flag("--resume", train_resume, "continue from the last stage checkpoint in --out");

    auto* animate = app.add_subcommand("animate", "drive a source image with IUV sequences");
    std::string an_ckpt, an_src, an_iuv, an_dir, an_out;
    animate->add_option("--config", config_file,
                        "config file (default: config.cfg next to the checkpoint)");
    animate->add_option("--set", sets, "config override key=value");
    animate->add_option("--checkpoint", an_ckpt, "model checkpoint")->required();
    animate->add_option("--source-image", an_src, "source frame (ppm)")->required();
    animate->add_option("--source-iuv", an_iuv, "source IUV map (iuvz)")->required();
    animate->add_option("--driving-iuv-dir", an_dir, "directory of driving .iuvz files")->required();
    animate->add_option("--out", an_out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_out, ev_protocol = "self-reconstruction", ev_split = "train";
    int ev_pairs = 50;
    eval->add_option("--config", config_file,
                     "config file (default: config.cfg next to the checkpoint)");
    eval->add_option("--set", sets, "config override key=value");
    eval->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    eval->add_option("--data", ev_data, "dataset root")->required();
    eval->add_option("--split", ev_split, "dataset split (default train)");
    eval->add_option("--protocol", ev_protocol, "self-reconstruction | cross-video");
    eval->add_option("--pairs", ev_pairs, "cross-video pair count");
    eval->add_option("--out", ev_out, "report output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return run_synth(synth_spec, synth_seed, synth_frames, synth_videos, synth_canvas,
                             synth_out, synth_force);
        if (train->parsed())
            return run_train(resolve_config(sets, config_file), train_data, train_out, train_resume);
        if (animate->parsed())
            return run_animate(config_for_checkpoint(an_ckpt, sets, config_file), an_ckpt, an_src,
                               an_iuv, an_dir, an_out);
        if (eval->parsed())
            return run_eval(config_for_checkpoint(ev_ckpt, sets, config_file), ev_ckpt, ev_data,
                            ev_split, ev_protocol, ev_pairs, ev_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
