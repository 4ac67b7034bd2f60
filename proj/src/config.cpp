#include "translid/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <sstream>

#include "translid/errors.hpp"

namespace translid {

namespace {

struct KeyDef {
  const char* key;      // "section.key"
  const char* fallback; // default value text
};

// The complete schema: every known key with its default.
constexpr std::array kSchema{
    // Transducer dimensions (feature dim and vocabulary live under corpus).
    KeyDef{"model.enc_hidden", "64"},
    KeyDef{"model.enc_layers", "2"},
    KeyDef{"model.enc_dim", "64"},
    KeyDef{"model.subsample", "2"},
    KeyDef{"model.embed_dim", "32"},
    KeyDef{"model.pred_hidden", "64"},
    KeyDef{"model.pred_dim", "64"},
    KeyDef{"model.joint_dim", "64"},
    KeyDef{"model.head_dim", "64"},
    // Stream selection and fusion weights.
    KeyDef{"fusion.variant", "late-dual"},
    KeyDef{"fusion.tau", "3"},
    KeyDef{"fusion.lambda", "1.0"},
    KeyDef{"fusion.alpha", "0.3"},
    // Trainable blocks during LID training.
    KeyDef{"freeze.train_encoder", "true"},
    KeyDef{"freeze.train_prediction", "true"},
    KeyDef{"freeze.train_joint", "true"},
    KeyDef{"freeze.train_head", "true"},
    // Synthetic corpus.
    KeyDef{"corpus.num_langs", "4"},
    KeyDef{"corpus.num_tokens", "12"},
    KeyDef{"corpus.feat_dim", "20"},
    KeyDef{"corpus.divergence", "2.0"},
    KeyDef{"corpus.emission_divergence", "0.0"},
    KeyDef{"corpus.train_per_lang", "500"},
    KeyDef{"corpus.val_per_lang", "50"},
    KeyDef{"corpus.test_per_lang", "100"},
    KeyDef{"corpus.min_frames", "300"},
    KeyDef{"corpus.max_frames", "800"},
    KeyDef{"corpus.dur_min", "2"},
    KeyDef{"corpus.dur_max", "6"},
    KeyDef{"corpus.mean_scale", "1.0"},
    KeyDef{"corpus.std_min", "0.3"},
    KeyDef{"corpus.std_max", "0.7"},
    KeyDef{"corpus.crop_frames", "100 200 300"},
    // Cross-domain shift applied to the shifted test split.
    KeyDef{"corpus.shift_offset", "0.5"},
    KeyDef{"corpus.shift_noise", "0.5"},
    KeyDef{"corpus.shift_rate", "1.25"},
    // Training.
    KeyDef{"train.rnnt_epochs", "3"},
    KeyDef{"train.rnnt_utts_per_epoch", "0"},
    KeyDef{"train.lid_epochs", "5"},
    KeyDef{"train.lid_utts_per_epoch", "0"},
    KeyDef{"train.val_utts", "0"},
    KeyDef{"train.batch_size", "8"},
    KeyDef{"train.lr", "1e-3"},
    KeyDef{"train.min_lr", "1e-8"},
    KeyDef{"train.plateau_patience", "2"},
    KeyDef{"train.grad_clip", "5.0"},
    KeyDef{"train.augment", "true"},
    KeyDef{"train.time_masks", "2"},
    KeyDef{"train.max_t", "20"},
    KeyDef{"train.freq_masks", "2"},
    KeyDef{"train.max_f", "4"},
    // Back-end.
    KeyDef{"backend.lda_dim", "3"},
    KeyDef{"backend.experts", "1"},
    KeyDef{"backend.l2", "1e-3"},
    KeyDef{"backend.epochs", "500"},
    // Run control.
    KeyDef{"run.seed", "7"},
    KeyDef{"run.jobs", "1"},
};

bool known_key(const std::string& key) {
  for (const KeyDef& def : kSchema)
    if (key == def.key) return true;
  return false;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace

AppConfig::AppConfig() {
  for (const KeyDef& def : kSchema) values_[def.key] = def.fallback;
}

void AppConfig::set(const std::string& key, const std::string& value,
                    const std::string& origin) {
  if (!known_key(key))
    throw ConfigError(msg(origin, ": unknown configuration key \"", key, "\""));
  values_[key] = value;
}

AppConfig AppConfig::from_text(const std::string& text,
                               const std::string& origin) {
  AppConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(msg(origin, ":", line_no, ": unterminated section header"));
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError(msg(origin, ":", line_no, ": empty section name"));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(msg(origin, ":", line_no, ": expected key = value"));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(msg(origin, ":", line_no, ": empty key"));
    if (section.empty())
      throw ConfigError(msg(origin, ":", line_no, ": key \"", key,
                            "\" outside any [section]"));
    cfg.set(section + "." + key, value, msg(origin, ":", line_no));
  }
  return cfg;
}

AppConfig AppConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(msg("cannot open config file ", path));
  std::ostringstream text;
  text << in.rdbuf();
  return from_text(text.str(), path);
}

void AppConfig::apply_override(const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError(msg("override \"", assignment,
                          "\" must look like section.key=value"));
  const std::string key = trim(assignment.substr(0, eq));
  if (key.find('.') == std::string::npos)
    throw ConfigError(msg("override key \"", key,
                          "\" must be section-qualified (section.key)"));
  set(key, trim(assignment.substr(eq + 1)), "override");
}

std::string AppConfig::resolved_text() const {
  // Canonical form: sections and keys in sorted order (std::map already
  // sorts "section.key" lexicographically).
  std::ostringstream out;
  std::string section;
  for (const auto& [key, value] : values_) {
    const std::size_t dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << value << '\n';
  }
  return out.str();
}

int AppConfig::get_int(const std::string& key) const {
  const std::string& text = get_string(key);
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(msg("key ", key, ": \"", text, "\" is not an integer"));
  }
}

double AppConfig::get_double(const std::string& key) const {
  const std::string& text = get_string(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(msg("key ", key, ": \"", text, "\" is not a number"));
  }
}

bool AppConfig::get_bool(const std::string& key) const {
  const std::string& text = get_string(key);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(msg("key ", key, ": \"", text, "\" is not a boolean"));
}

const std::string& AppConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end())
    throw ConfigError(msg("unknown configuration key \"", key, "\""));
  return it->second;
}

std::vector<int> AppConfig::get_int_list(const std::string& key) const {
  const std::string& text = get_string(key);
  std::istringstream in(text);
  std::vector<int> out;
  int v;
  while (in >> v) out.push_back(v);
  if (!in.eof())
    throw ConfigError(msg("key ", key, ": \"", text,
                          "\" is not a space-separated integer list"));
  return out;
}

TransducerDims AppConfig::transducer_dims() const {
  TransducerDims dims;
  dims.feat_dim = get_int("corpus.feat_dim");
  dims.enc_hidden = get_int("model.enc_hidden");
  dims.enc_layers = get_int("model.enc_layers");
  dims.enc_dim = get_int("model.enc_dim");
  dims.subsample = get_int("model.subsample");
  dims.vocab_tokens = get_int("corpus.num_tokens");
  dims.embed_dim = get_int("model.embed_dim");
  dims.pred_hidden = get_int("model.pred_hidden");
  dims.pred_dim = get_int("model.pred_dim");
  dims.joint_dim = get_int("model.joint_dim");
  return dims;
}

StreamVariant AppConfig::variant() const {
  return parse_variant(get_string("fusion.variant"));
}

FreezeMask AppConfig::freeze_mask() const {
  FreezeMask mask;
  mask.train_encoder = get_bool("freeze.train_encoder");
  mask.train_prediction = get_bool("freeze.train_prediction");
  mask.train_joint = get_bool("freeze.train_joint");
  mask.train_head = get_bool("freeze.train_head");
  return mask;
}

LanguageSpecOptions AppConfig::language_spec_options() const {
  LanguageSpecOptions opt;
  opt.dur_min = get_int("corpus.dur_min");
  opt.dur_max = get_int("corpus.dur_max");
  opt.mean_scale = get_double("corpus.mean_scale");
  opt.std_min = get_double("corpus.std_min");
  opt.std_max = get_double("corpus.std_max");
  opt.emission_divergence = get_double("corpus.emission_divergence");
  return opt;
}

DomainShift AppConfig::domain_shift(int feat_dim) const {
  DomainShift shift;
  shift.offset.assign(feat_dim, get_double("corpus.shift_offset"));
  shift.noise_mult = get_double("corpus.shift_noise");
  shift.rate = get_double("corpus.shift_rate");
  return shift;
}

void AppConfig::validate() const {
  transducer_dims();  // numeric parse of every dim
  variant();
  const int langs = get_int("corpus.num_langs");
  if (langs < 2) throw ConfigError(msg("corpus.num_langs must be >= 2, got ", langs));
  if (get_int("fusion.tau") < 1)
    throw ConfigError("fusion.tau must be >= 1");
  if (get_double("fusion.lambda") < 0.0 || get_double("fusion.alpha") < 0.0)
    throw ConfigError("fusion weights must be non-negative");
  if (variant() == StreamVariant::kEarlyFused &&
      get_int("model.enc_dim") != get_int("model.pred_dim"))
    throw ConfigError(msg("early fusion needs model.enc_dim == model.pred_dim, got ",
                          get_int("model.enc_dim"), " vs ", get_int("model.pred_dim")));
  const int lda = get_int("backend.lda_dim");
  if (lda < 1 || lda > langs - 1)
    throw ConfigError(msg("backend.lda_dim must be in [1, ", langs - 1,
                          "], got ", lda));
  if (get_int("backend.experts") < 1)
    throw ConfigError("backend.experts must be >= 1");
  if (get_int("corpus.min_frames") > get_int("corpus.max_frames"))
    throw ConfigError("corpus.min_frames must not exceed corpus.max_frames");
  if (get_int("corpus.dur_min") < 1 ||
      get_int("corpus.dur_max") < get_int("corpus.dur_min"))
    throw ConfigError("bad corpus token duration range");
  if (get_int("corpus.min_frames") < get_int("corpus.dur_max"))
    throw ConfigError("corpus.min_frames must be at least corpus.dur_max");
  if (get_int("train.batch_size") < 1)
    throw ConfigError("train.batch_size must be >= 1");
  if (get_double("train.lr") <= 0.0)
    throw ConfigError("train.lr must be positive");
  const double rate = get_double("corpus.shift_rate");
  if (rate < 0.5 || rate > 2.0)
    throw ConfigError(msg("corpus.shift_rate must be in [0.5, 2], got ", rate));
  for (int crop : get_int_list("corpus.crop_frames"))
    if (crop < 1) throw ConfigError("corpus.crop_frames entries must be >= 1");
}

}  // namespace translid
