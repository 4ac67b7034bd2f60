#ifndef TRANSLID_CONFIG_HPP
#define TRANSLID_CONFIG_HPP

#include <map>
#include <string>
#include <vector>

#include "translid/corpus.hpp"
#include "translid/embedder.hpp"

namespace translid {

// Sectioned key-value configuration. Every key has a default; files and
// command-line overrides may only touch known keys (unknown ones are
// rejected), and `resolved_text()` serializes the complete effective
// configuration so each run can log and snapshot it.
class AppConfig {
 public:
  AppConfig();  // all defaults

  static AppConfig from_file(const std::string& path);
  static AppConfig from_text(const std::string& text, const std::string& origin);

  // `section.key=value`; precedence is overrides > file > defaults.
  void apply_override(const std::string& assignment);

  std::string resolved_text() const;

  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  // Typed views assembled from the raw keys (validated on access).
  TransducerDims transducer_dims() const;
  StreamVariant variant() const;
  FreezeMask freeze_mask() const;
  LanguageSpecOptions language_spec_options() const;
  DomainShift domain_shift(int feat_dim) const;

  // Cross-field validation beyond per-key parsing; throws ConfigError.
  void validate() const;

 private:
  void set(const std::string& key, const std::string& value,
           const std::string& origin);
  std::map<std::string, std::string> values_;  // "section.key" -> text value
};

}  // namespace translid

#endif  // TRANSLID_CONFIG_HPP
