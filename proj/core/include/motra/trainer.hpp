#pragma once

#include <functional>
#include <map>
#include <set>

#include "motra/iuv_io.hpp"
#include "motra/losses.hpp"
#include "motra/model.hpp"

namespace motra {

// One training stage: which module groups train, which stay frozen, how many
// iterations, and which loss terms are active. Frozen groups are bit-checked
// against a pre-stage snapshot when the stage ends.
struct StageSpec {
    std::string name;
    std::set<std::string> trainable;  // module group names
    std::set<std::string> frozen;     // complement of trainable
    long iterations = 0;
    std::set<std::string> losses;  // of {iuv, rec_geo, mask_geo, motion, rec_app,
                                   //     mask_app, rec_d, mask_d, adv}
};

struct StageSchedule {
    std::vector<StageSpec> stages;

    // The standard schedule scaled by cfg.iter_scale: either the four-stage
    // program (texture 100k, warp 100k, full 200k, blend 200k) or, with
    // cfg.stages == 1, a single end-to-end stage of 600k iterations.
    static StageSchedule standard(const RunConfig& cfg);

    void validate() const;
};

struct OptimConfig {
    float lr = 2e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    int batch_size = 8;
    std::uint64_t seed = 0;

    static OptimConfig from(const RunConfig& cfg) {
        OptimConfig o;
        o.lr = cfg.lr;
        o.beta1 = cfg.adam_beta1;
        o.beta2 = cfg.adam_beta2;
        o.eps = cfg.adam_eps;
        o.batch_size = cfg.batch_size;
        o.seed = cfg.seed;
        if (o.lr <= 0) throw ConfigError("OptimConfig: lr must be positive");
        return o;
    }
};

// Adam over a fixed list of registry parameters; state is created fresh at
// every stage start so resumed runs retrace the original trajectory.
class Adam {
  public:
    Adam(ParamRegistry& reg, std::vector<std::string> names, const OptimConfig& cfg);
    void step();
    void zero_grad();

  private:
    ParamRegistry& reg_;
    std::vector<std::string> names_;
    std::vector<Tensor> m_, v_;
    OptimConfig cfg_;
    long t_ = 0;
};

// Checkpoint file: a text manifest (name, dtype, shape per parameter)
// followed by raw little-endian parameter blobs in manifest order.
void save_checkpoint(const ParamRegistry& reg, const std::string& path);
void load_checkpoint(ParamRegistry& reg, const std::string& path);

// Observation points for tests; all optional.
struct TrainHooks {
    std::function<void(int stage_idx, const StageSpec&)> on_stage_start;
    std::function<void(int stage_idx, const StageSpec&)> on_stage_end;
    std::function<void(Model&, long iter)> after_d_step;
    std::function<void(Model&, long iter)> after_g_backward;
};

struct TrainResult {
    std::vector<std::string> stage_checkpoints;
    std::string final_checkpoint;
    std::string loss_log;
    long iterations_run = 0;
};

// Orchestrates the multi-stage schedule over self-reconstruction pairs.
// Emits loss.csv (header iter,stage,term,value) and one checkpoint per
// stage under out_dir. A non-finite loss aborts with NumericError naming
// the term and iteration. With resume=true, completed stages found in
// out_dir are skipped and training continues from the last stage
// checkpoint.
class Trainer {
  public:
    Trainer(Model& model, const RunConfig& cfg);

    TrainResult train(const Dataset& data, const StageSchedule& schedule,
                      const OptimConfig& optim, const std::string& out_dir, bool resume = false,
                      const TrainHooks* hooks = nullptr);

  private:
    Model& model_;
    RunConfig cfg_;
    RandomConvFeatures fx_;
    LossWeights weights_;
};

}  // namespace motra
