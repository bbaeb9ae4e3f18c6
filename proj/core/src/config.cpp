#include "umle/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "umle/errors.hpp"

namespace umle {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + key + ": '" + v + "'");
  }
}

long parse_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long d = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + key + ": '" + v + "'");
  }
}

bool parse_on_off(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("bad on/off value for " + key + ": '" + v + "'");
}

}  // namespace

std::string ablation_name(Ablation a) {
  switch (a) {
    case Ablation::NoColorD: return "no_color_d";
    case Ablation::NoTextureD: return "no_texture_d";
    case Ablation::NoMultiscaleD: return "no_multiscale_d";
    case Ablation::NoCpam: return "no_cpam";
    case Ablation::NoSharedEncoder: return "no_shared_encoder";
  }
  return "?";
}

Ablation ablation_from_name(const std::string& name) {
  for (Ablation a : {Ablation::NoColorD, Ablation::NoTextureD, Ablation::NoMultiscaleD,
                     Ablation::NoCpam, Ablation::NoSharedEncoder})
    if (ablation_name(a) == name) return a;
  throw ConfigError("unknown ablation: '" + name + "'");
}

void TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (lr <= 0.0) throw ConfigError("lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (weights.w_adv < 0 || weights.w_cyc < 0 || weights.w_color < 0 || weights.w_pre < 0 ||
      weights.w_idt < 0)
    throw ConfigError("loss weights must be >= 0");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0 (0 disables)");
  if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
  if (perceptual_layer < 1) throw ConfigError("perceptual_layer must be >= 1");
  arch.validate();
}

ModelOptions TrainConfig::model_options() const {
  ModelOptions o;
  o.share_encoder = effective_share_encoder();
  o.use_cpam = !ablation.count(Ablation::NoCpam);
  o.color_branch = !ablation.count(Ablation::NoColorD);
  o.texture_branch = !ablation.count(Ablation::NoTextureD);
  o.multiscale_branch = !ablation.count(Ablation::NoMultiscaleD);
  o.pixel_form = pixel_attention_form;
  return o;
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (ablation.count(Ablation::NoColorD)) w.w_color = 0.0;
  return w;
}

std::string TrainConfig::canonical_text() const {
  std::ostringstream os;
  os << "seed = " << seed << "\n";
  os << "iterations = " << iterations << "\n";
  os << "lr = " << fmt_double(lr) << "\n";
  os << "weight_decay = " << fmt_double(weight_decay) << "\n";
  os << "w_adv = " << fmt_double(weights.w_adv) << "\n";
  os << "w_cyc = " << fmt_double(weights.w_cyc) << "\n";
  os << "w_color = " << fmt_double(weights.w_color) << "\n";
  os << "w_pre = " << fmt_double(weights.w_pre) << "\n";
  os << "w_idt = " << fmt_double(weights.w_idt) << "\n";
  os << "base_channels = " << arch.base_channels << "\n";
  os << "n_down = " << arch.n_down << "\n";
  os << "n_res = " << arch.n_res << "\n";
  os << "resolution = " << arch.resolution << "\n";
  std::string abl;
  for (Ablation a : ablation) abl += (abl.empty() ? "" : ",") + ablation_name(a);
  os << "ablation = " << (abl.empty() ? "none" : abl) << "\n";
  os << "adversarial_form = " << (adversarial_form == AdversarialForm::LeastSquares ? "ls" : "log")
     << "\n";
  os << "pixel_attention_form = "
     << (pixel_attention_form == PixelAttentionForm::Textual ? "textual" : "literal") << "\n";
  os << "share_encoder = " << (share_encoder ? "on" : "off") << "\n";
  os << "d_step_updates_encoder = " << (d_step_updates_encoder ? "on" : "off") << "\n";
  os << "clip_norm = " << fmt_double(clip_norm) << "\n";
  os << "perceptual_layer = " << perceptual_layer << "\n";
  os << "vgg_weights = " << vgg_weights << "\n";
  os << "data_root = " << data_root << "\n";
  os << "out_dir = " << out_dir << "\n";
  os << "checkpoint_every = " << checkpoint_every << "\n";
  return os.str();
}

std::string TrainConfig::digest() const {
  // Model/training identity only; operational keys excluded so a resumed run
  // may extend iterations or relocate outputs.
  std::ostringstream os;
  os << "seed=" << seed << ";lr=" << fmt_double(lr) << ";wd=" << fmt_double(weight_decay)
     << ";w=" << fmt_double(weights.w_adv) << "," << fmt_double(weights.w_cyc) << ","
     << fmt_double(weights.w_color) << "," << fmt_double(weights.w_pre) << ","
     << fmt_double(weights.w_idt) << ";arch=" << arch.base_channels << "," << arch.n_down << ","
     << arch.n_res << "," << arch.resolution << ";abl=";
  for (Ablation a : ablation) os << ablation_name(a) << ",";
  os << ";adv=" << (adversarial_form == AdversarialForm::LeastSquares ? "ls" : "log")
     << ";px=" << (pixel_attention_form == PixelAttentionForm::Textual ? "textual" : "literal")
     << ";share=" << (share_encoder ? 1 : 0) << ";denc=" << (d_step_updates_encoder ? 1 : 0)
     << ";clip=" << fmt_double(clip_norm) << ";pl=" << perceptual_layer << ";vgg=" << vgg_weights;
  return fnv1a_hex(os.str());
}

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(key, value));
    else if (key == "iterations") cfg.iterations = parse_long(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
    else if (key == "w_adv") cfg.weights.w_adv = parse_double(key, value);
    else if (key == "w_cyc") cfg.weights.w_cyc = parse_double(key, value);
    else if (key == "w_color") cfg.weights.w_color = parse_double(key, value);
    else if (key == "w_pre") cfg.weights.w_pre = parse_double(key, value);
    else if (key == "w_idt") cfg.weights.w_idt = parse_double(key, value);
    else if (key == "base_channels") cfg.arch.base_channels = static_cast<int>(parse_long(key, value));
    else if (key == "n_down") cfg.arch.n_down = static_cast<int>(parse_long(key, value));
    else if (key == "n_res") cfg.arch.n_res = static_cast<int>(parse_long(key, value));
    else if (key == "resolution") cfg.arch.resolution = static_cast<int>(parse_long(key, value));
    else if (key == "ablation") {
      cfg.ablation.clear();
      if (value != "none" && !value.empty()) {
        std::istringstream vs(value);
        std::string item;
        while (std::getline(vs, item, ',')) {
          item = trim(item);
          if (!item.empty()) cfg.ablation.insert(ablation_from_name(item));
        }
      }
    } else if (key == "adversarial_form") {
      if (value == "ls") cfg.adversarial_form = AdversarialForm::LeastSquares;
      else if (value == "log") cfg.adversarial_form = AdversarialForm::Log;
      else throw ConfigError("adversarial_form must be ls or log");
    } else if (key == "pixel_attention_form") {
      if (value == "textual") cfg.pixel_attention_form = PixelAttentionForm::Textual;
      else if (value == "literal") cfg.pixel_attention_form = PixelAttentionForm::Literal;
      else throw ConfigError("pixel_attention_form must be textual or literal");
    } else if (key == "share_encoder") cfg.share_encoder = parse_on_off(key, value);
    else if (key == "d_step_updates_encoder") cfg.d_step_updates_encoder = parse_on_off(key, value);
    else if (key == "clip_norm") cfg.clip_norm = parse_double(key, value);
    else if (key == "perceptual_layer") cfg.perceptual_layer = static_cast<int>(parse_long(key, value));
    else if (key == "vgg_weights") cfg.vgg_weights = value;
    else if (key == "data_root") cfg.data_root = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_long(key, value);
    else throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(lineno) + ")");
  }
  cfg.validate();
  return cfg;
}

TrainConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file: " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return parse_config_text(os.str());
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace umle
