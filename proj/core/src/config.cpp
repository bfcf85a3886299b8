#include "motra/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace motra {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    auto e = s.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
    std::istringstream is(v);
    T out;
    is >> out;
    if (is.fail() || !trim(v.substr(is.eof() ? v.size() : static_cast<std::size_t>(is.tellg()))).empty())
        throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
    return out;
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(parse_num<int>(item, key));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        "working_res", "output_res", "flow_scales", "alpha_len", "rho_len", "atlas_res",
        "atlas_channels", "base_channels", "warp_channels", "blender_channels",
        "super_resolution", "batch_size", "lr", "adam_beta1", "adam_beta2", "adam_eps",
        "seed", "iter_scale", "stages", "loss.lambda_cor", "loss.lambda_reg",
        "loss.lambda_tv", "loss.lambda_con", "loss.lambda_uv", "loss.lambda_ce",
        "loss.lambda_p", "loss.lambda_1", "loss.uv_mask_detach", "loss.enable_correctness",
        "loss.enable_affine_reg", "loss.enable_adv", "loss.rec_scales", "fx_seed",
        "embed_seed", "embed_dim", "eval_pairs",
    };
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    if (key == "working_res") working_res = parse_num<int>(value, key);
    else if (key == "output_res") output_res = parse_num<int>(value, key);
    else if (key == "flow_scales") flow_scales = parse_int_list(value, key);
    else if (key == "alpha_len") alpha_len = parse_num<int>(value, key);
    else if (key == "rho_len") rho_len = parse_num<int>(value, key);
    else if (key == "atlas_res") atlas_res = parse_num<int>(value, key);
    else if (key == "atlas_channels") atlas_channels = parse_num<int>(value, key);
    else if (key == "base_channels") base_channels = parse_num<int>(value, key);
    else if (key == "warp_channels") warp_channels = parse_num<int>(value, key);
    else if (key == "blender_channels") blender_channels = parse_num<int>(value, key);
    else if (key == "super_resolution") super_resolution = parse_bool(value, key);
    else if (key == "batch_size") batch_size = parse_num<int>(value, key);
    else if (key == "lr") lr = parse_num<float>(value, key);
    else if (key == "adam_beta1") adam_beta1 = parse_num<float>(value, key);
    else if (key == "adam_beta2") adam_beta2 = parse_num<float>(value, key);
    else if (key == "adam_eps") adam_eps = parse_num<float>(value, key);
    else if (key == "seed") seed = parse_num<std::uint64_t>(value, key);
    else if (key == "iter_scale") iter_scale = parse_num<double>(value, key);
    else if (key == "stages") stages = parse_num<int>(value, key);
    else if (key == "loss.lambda_cor") lambda_cor = parse_num<float>(value, key);
    else if (key == "loss.lambda_reg") lambda_reg = parse_num<float>(value, key);
    else if (key == "loss.lambda_tv") lambda_tv = parse_num<float>(value, key);
    else if (key == "loss.lambda_con") lambda_con = parse_num<float>(value, key);
    else if (key == "loss.lambda_uv") lambda_uv = parse_num<float>(value, key);
    else if (key == "loss.lambda_ce") lambda_ce = parse_num<float>(value, key);
    else if (key == "loss.lambda_p") lambda_p = parse_num<float>(value, key);
    else if (key == "loss.lambda_1") lambda_1 = parse_num<float>(value, key);
    else if (key == "loss.uv_mask_detach") uv_mask_detach = parse_bool(value, key);
    else if (key == "loss.enable_correctness") enable_correctness = parse_bool(value, key);
    else if (key == "loss.enable_affine_reg") enable_affine_reg = parse_bool(value, key);
    else if (key == "loss.enable_adv") enable_adv = parse_bool(value, key);
    else if (key == "loss.rec_scales") rec_scales = parse_num<int>(value, key);
    else if (key == "fx_seed") fx_seed = parse_num<std::uint64_t>(value, key);
    else if (key == "embed_seed") embed_seed = parse_num<std::uint64_t>(value, key);
    else if (key == "embed_dim") embed_dim = parse_num<int>(value, key);
    else if (key == "eval_pairs") eval_pairs = parse_num<int>(value, key);
    else throw ConfigError("unknown config key: '" + key + "'");
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

void RunConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw ConfigError(std::string("config: ") + name + " must be positive");
    };
    positive(working_res, "working_res");
    positive(output_res, "output_res");
    positive(alpha_len, "alpha_len");
    positive(rho_len, "rho_len");
    positive(atlas_res, "atlas_res");
    positive(atlas_channels, "atlas_channels");
    positive(base_channels, "base_channels");
    positive(warp_channels, "warp_channels");
    positive(blender_channels, "blender_channels");
    positive(batch_size, "batch_size");
    if (lr <= 0) throw ConfigError("config: lr must be positive");
    if (iter_scale <= 0) throw ConfigError("config: iter_scale must be positive");
    if (stages != 1 && stages != 4) throw ConfigError("config: stages must be 1 or 4");
    if (rec_scales < 1) throw ConfigError("config: loss.rec_scales must be >= 1");
    if (flow_scales.size() < 2) throw ConfigError("config: need at least 2 flow scales");
    for (std::size_t i = 1; i < flow_scales.size(); ++i)
        if (flow_scales[i] <= flow_scales[i - 1])
            throw ConfigError("config: flow_scales must be strictly increasing");
    if (flow_scales.back() != working_res)
        throw ConfigError("config: finest flow scale must equal working_res");
    for (int s : flow_scales)
        if (working_res % s != 0) throw ConfigError("config: flow scales must divide working_res");
    int expected_out = super_resolution ? 2 * working_res : working_res;
    if (output_res != expected_out)
        throw ConfigError("config: output_res must be " + std::to_string(expected_out) +
                          (super_resolution ? " (2x working_res with super_resolution)"
                                            : " (equal to working_res without super_resolution)"));
    if ((working_res & (working_res - 1)) != 0)
        throw ConfigError("config: working_res must be a power of two");
    float lambdas[] = {lambda_cor, lambda_reg, lambda_tv, lambda_con,
                       lambda_uv,  lambda_ce,  lambda_p,  lambda_1};
    for (float l : lambdas)
        if (l < 0) throw ConfigError("config: loss weights must be non-negative");
}

std::string RunConfig::describe() const {
    std::ostringstream os;
    os.precision(9);
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "working_res = " << working_res << "\n";
    os << "output_res = " << output_res << "\n";
    os << "flow_scales = ";
    for (std::size_t i = 0; i < flow_scales.size(); ++i)
        os << (i ? "," : "") << flow_scales[i];
    os << "\n";
    os << "alpha_len = " << alpha_len << "\n";
    os << "rho_len = " << rho_len << "\n";
    os << "atlas_res = " << atlas_res << "\n";
    os << "atlas_channels = " << atlas_channels << "\n";
    os << "base_channels = " << base_channels << "\n";
    os << "warp_channels = " << warp_channels << "\n";
    os << "blender_channels = " << blender_channels << "\n";
    os << "super_resolution = " << b(super_resolution) << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "lr = " << lr << "\n";
    os << "adam_beta1 = " << adam_beta1 << "\n";
    os << "adam_beta2 = " << adam_beta2 << "\n";
    os << "adam_eps = " << adam_eps << "\n";
    os << "seed = " << seed << "\n";
    os << "iter_scale = " << iter_scale << "\n";
    os << "stages = " << stages << "\n";
    os << "loss.lambda_cor = " << lambda_cor << "\n";
    os << "loss.lambda_reg = " << lambda_reg << "\n";
    os << "loss.lambda_tv = " << lambda_tv << "\n";
    os << "loss.lambda_con = " << lambda_con << "\n";
    os << "loss.lambda_uv = " << lambda_uv << "\n";
    os << "loss.lambda_ce = " << lambda_ce << "\n";
    os << "loss.lambda_p = " << lambda_p << "\n";
    os << "loss.lambda_1 = " << lambda_1 << "\n";
    os << "loss.uv_mask_detach = " << b(uv_mask_detach) << "\n";
    os << "loss.enable_correctness = " << b(enable_correctness) << "\n";
    os << "loss.enable_affine_reg = " << b(enable_affine_reg) << "\n";
    os << "loss.enable_adv = " << b(enable_adv) << "\n";
    os << "loss.rec_scales = " << rec_scales << "\n";
    os << "fx_seed = " << fx_seed << "\n";
    os << "embed_seed = " << embed_seed << "\n";
    os << "embed_dim = " << embed_dim << "\n";
    os << "eval_pairs = " << eval_pairs << "\n";
    return os.str();
}

}  // namespace motra
