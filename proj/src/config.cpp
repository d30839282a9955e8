// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "budgetvit/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "budgetvit/errors.hpp"

namespace budgetvit {
namespace {

namespace pt = boost::property_tree;

// Bad values are reported with their key instead of thrown one at a time.
struct BadValue {
  std::string message;
};

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

double parse_double(const std::string& s) {
  double x = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, x);
  if (ec != std::errc() || ptr != last) throw BadValue{"expected a number, got '" + s + "'"};
  return x;
}

template <typename I>
I parse_integer(const std::string& s) {
  I x{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw BadValue{"expected an integer, got '" + s + "'"};
  return x;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw BadValue{"expected true or false, got '" + s + "'"};
}

std::array<double, 3> parse_triple(const std::string& s) {
  std::array<double, 3> out{};
  std::stringstream ss(s);
  std::string item;
  std::size_t n = 0;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (n >= 3 || b == std::string::npos) throw BadValue{"expected three comma-separated numbers, got '" + s + "'"};
    out[n++] = parse_double(item.substr(b, e - b + 1));
  }
  if (n != 3) throw BadValue{"expected three comma-separated numbers, got '" + s + "'"};
  return out;
}

std::string format_triple(const std::array<double, 3>& a) {
  return format_double(a[0]) + "," + format_double(a[1]) + "," + format_double(a[2]);
}

template <typename E>
E parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    names += names.empty() ? name : std::string(" | ") + name;
  }
  throw BadValue{"expected one of " + names + ", got '" + s + "'"};
}

struct Key {
  const char* section;
  const char* name;
  std::function<std::string(const RunConfig&)> get;  // empty string: omit from output
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k;
    auto integer = [&k](const char* sec, const char* name, auto member) {
      k.push_back({sec, name, [member](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
                   [member](RunConfig& c, const std::string& v) {
                     member(c) = parse_integer<std::remove_reference_t<decltype(member(c))>>(v);
                   }});
    };
    auto real = [&k](const char* sec, const char* name, auto member) {
      k.push_back({sec, name, [member](const RunConfig& c) { return format_double(member(const_cast<RunConfig&>(c))); },
                   [member](RunConfig& c, const std::string& v) { member(c) = parse_double(v); }});
    };
    auto boolean = [&k](const char* sec, const char* name, auto member) {
      k.push_back({sec, name,
                   [member](const RunConfig& c) {
                     return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false");
                   },
                   [member](RunConfig& c, const std::string& v) { member(c) = parse_bool(v); }});
    };

    integer("model", "embed_dim", [](RunConfig& c) -> int& { return c.model.embed_dim; });
    integer("model", "depth", [](RunConfig& c) -> int& { return c.model.depth; });
    integer("model", "num_heads", [](RunConfig& c) -> int& { return c.model.num_heads; });
    integer("model", "patch_size", [](RunConfig& c) -> int& { return c.model.patch_size; });
    integer("model", "num_classes", [](RunConfig& c) -> int& { return c.model.num_classes; });
    k.push_back({"model", "ffn", [](const RunConfig& c) { return to_string(c.model.ffn_kind); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.ffn_kind = parse_enum(v, {std::pair{"locality", FfnKind::Locality},
                                                     std::pair{"plain", FfnKind::Plain}});
                 }});
    k.push_back({"model", "activation", [](const RunConfig& c) { return to_string(c.model.activation); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.activation = parse_enum(v, {std::pair{"h_swish", Activation::HSwish},
                                                       std::pair{"gelu", Activation::Gelu}});
                 }});
    k.push_back({"model", "gelu_mode", [](const RunConfig& c) { return to_string(c.model.gelu_mode); },
                 [](RunConfig& c, const std::string& v) {
                   c.model.gelu_mode =
                       parse_enum(v, {std::pair{"erf", GeluMode::Erf}, std::pair{"tanh", GeluMode::Tanh}});
                 }});
    boolean("model", "use_class_token", [](RunConfig& c) -> bool& { return c.model.use_class_token; });
    real("model", "ln_eps", [](RunConfig& c) -> double& { return c.model.ln_eps; });

    integer("schedule", "initial_size", [](RunConfig& c) -> int& { return c.schedule.initial_size; });
    integer("schedule", "increment", [](RunConfig& c) -> int& { return c.schedule.increment; });
    integer("schedule", "period_epochs", [](RunConfig& c) -> int& { return c.schedule.period_epochs; });
    integer("schedule", "final_size", [](RunConfig& c) -> int& { return c.schedule.final_size; });

    real("optim", "lr", [](RunConfig& c) -> double& { return c.optim.lr; });
    real("optim", "beta1", [](RunConfig& c) -> double& { return c.optim.beta1; });
    real("optim", "beta2", [](RunConfig& c) -> double& { return c.optim.beta2; });
    real("optim", "eps", [](RunConfig& c) -> double& { return c.optim.eps; });
    real("optim", "weight_decay", [](RunConfig& c) -> double& { return c.optim.weight_decay; });
    real("optim", "label_smoothing", [](RunConfig& c) -> double& { return c.optim.label_smoothing; });
    integer("optim", "batch_size", [](RunConfig& c) -> int& { return c.optim.batch_size; });
    k.push_back({"optim", "lr_schedule", [](const RunConfig& c) { return to_string(c.optim.lr_schedule); },
                 [](RunConfig& c, const std::string& v) {
                   c.optim.lr_schedule = parse_enum(v, {std::pair{"constant", LrSchedule::Constant},
                                                        std::pair{"cosine", LrSchedule::Cosine}});
                 }});

    k.push_back({"data", "format", [](const RunConfig& c) { return to_string(c.data.format); },
                 [](RunConfig& c, const std::string& v) {
                   try {
                     c.data.format = parse_data_format(v);
                   } catch (const ArgumentError& e) {
                     throw BadValue{e.what()};
                   }
                 }});
    k.push_back({"data", "path", [](const RunConfig& c) { return c.data.path; },
                 [](RunConfig& c, const std::string& v) { c.data.path = v; }});
    k.push_back({"data", "val_path", [](const RunConfig& c) { return c.data.val_path; },
                 [](RunConfig& c, const std::string& v) { c.data.val_path = v; }});
    k.push_back({"data", "mean",
                 [](const RunConfig& c) { return c.data.norm ? format_triple(c.data.norm->mean) : std::string(); },
                 [](RunConfig& c, const std::string& v) {
                   if (!c.data.norm) c.data.norm = Normalization::natural_images();
                   c.data.norm->mean = parse_triple(v);
                 }});
    k.push_back({"data", "std",
                 [](const RunConfig& c) { return c.data.norm ? format_triple(c.data.norm->std) : std::string(); },
                 [](RunConfig& c, const std::string& v) {
                   if (!c.data.norm) c.data.norm = Normalization::natural_images();
                   c.data.norm->std = parse_triple(v);
                 }});
    boolean("data", "augment", [](RunConfig& c) -> bool& { return c.data.augment; });
    integer("data", "synthetic_classes", [](RunConfig& c) -> int& { return c.data.synthetic_classes; });
    integer("data", "synthetic_train_per_class", [](RunConfig& c) -> int& { return c.data.synthetic_train_per_class; });
    integer("data", "synthetic_val_per_class", [](RunConfig& c) -> int& { return c.data.synthetic_val_per_class; });
    integer("data", "synthetic_size", [](RunConfig& c) -> int& { return c.data.synthetic_size; });
    integer("data", "synthetic_seed", [](RunConfig& c) -> std::uint64_t& { return c.data.synthetic_seed; });

    real("budget", "wall_clock_limit", [](RunConfig& c) -> double& { return c.budget.wall_clock_limit; });
    integer("budget", "max_epochs", [](RunConfig& c) -> int& { return c.budget.max_epochs; });

    integer("run", "seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
    k.push_back({"run", "run_dir", [](const RunConfig& c) { return c.run_dir; },
                 [](RunConfig& c, const std::string& v) { c.run_dir = v; }});
    k.push_back({"run", "precision", [](const RunConfig& c) { return to_string(c.precision); },
                 [](RunConfig& c, const std::string& v) {
                   c.precision =
                       parse_enum(v, {std::pair{"single", Precision::Single}, std::pair{"double", Precision::Double}});
                 }});
    integer("run", "eval_size", [](RunConfig& c) -> int& { return c.eval_size; });
    return k;
  }();
  return table;
}

const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys()) {
    if (section == k.section && name == k.name) return &k;
  }
  return nullptr;
}

void apply(RunConfig& cfg, const std::string& section, const std::string& name, const std::string& value,
           std::vector<std::string>& errors) {
  const Key* key = find_key(section, name);
  if (!key) {
    errors.push_back(section + "." + name + ": unknown key");
    return;
  }
  try {
    key->set(cfg, value);
  } catch (const BadValue& e) {
    errors.push_back(section + "." + name + ": " + e.message);
  }
}

}  // namespace

std::string to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "cosine"; }
std::string to_string(Precision p) { return p == Precision::Single ? "single" : "double"; }

Normalization DataConfig::normalization() const {
  if (norm) return *norm;
  return format == DataFormat::Synthetic ? Normalization::half() : Normalization::natural_images();
}

std::vector<std::string> RunConfig::validate(DataCheck data_check) const {
  std::vector<std::string> v;
  ModelConfig m = model;
  m.final_image_size = schedule.final_size;
  for (auto& s : m.validate()) {
    // The final image size is owned by the schedule section.
    if (s.rfind("model.final_image_size", 0) != 0) v.push_back(std::move(s));
  }
  ScheduleSpec sched = schedule;
  sched.patch_size = model.patch_size;
  if (model.patch_size >= 1) {
    for (auto& s : budgetvit::validate(sched)) v.push_back(std::move(s));
  }

  if (!(optim.lr > 0.0)) v.emplace_back("optim.lr: must be positive");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0)) v.emplace_back("optim.beta1: must lie in [0, 1)");
  if (!(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) v.emplace_back("optim.beta2: must lie in [0, 1)");
  if (!(optim.eps > 0.0)) v.emplace_back("optim.eps: must be positive");
  if (!(optim.weight_decay >= 0.0)) v.emplace_back("optim.weight_decay: must be >= 0");
  if (!(optim.label_smoothing >= 0.0 && optim.label_smoothing < 1.0)) {
    v.emplace_back("optim.label_smoothing: must lie in [0, 1)");
  }
  if (optim.batch_size < 1) v.emplace_back("optim.batch_size: must be >= 1");

  if (!(budget.wall_clock_limit > 0.0)) v.emplace_back("budget.wall_clock_limit: must be positive");
  if (budget.max_epochs < 0) v.emplace_back("budget.max_epochs: must be >= 0");

  if (eval_size < 0) {
    v.emplace_back("run.eval_size: must be >= 0");
  } else if (eval_size > 0 && model.patch_size >= 1 && eval_size % model.patch_size != 0) {
    v.emplace_back("run.eval_size: " + std::to_string(eval_size) + " is not divisible by model.patch_size " +
                   std::to_string(model.patch_size));
  }

  if (data_check == DataCheck::Skip) return v;
  const bool check_paths = data_check == DataCheck::Full;
  if (data.norm) {
    for (double s : data.norm->std) {
      if (!(s > 0.0)) {
        v.emplace_back("data.std: every channel must be positive");
        break;
      }
    }
  }
  if (data.format == DataFormat::Synthetic) {
    if (data.synthetic_classes < 1) v.emplace_back("data.synthetic_classes: must be >= 1");
    if (data.synthetic_train_per_class < 1) v.emplace_back("data.synthetic_train_per_class: must be >= 1");
    if (data.synthetic_val_per_class < 1) v.emplace_back("data.synthetic_val_per_class: must be >= 1");
    if (data.synthetic_size < 1) v.emplace_back("data.synthetic_size: must be >= 1");
    if (data.synthetic_classes != model.num_classes) {
      v.emplace_back("model.num_classes: " + std::to_string(model.num_classes) + " does not match data.synthetic_classes " +
                     std::to_string(data.synthetic_classes));
    }
  } else {
    if (data.path.empty()) {
      v.emplace_back("data.path: required for format " + to_string(data.format));
    } else if (check_paths && !std::filesystem::exists(data.path)) {
      v.emplace_back("data.path: '" + data.path + "' does not exist");
    }
    if (check_paths && !data.val_path.empty() && !std::filesystem::exists(data.val_path)) {
      v.emplace_back("data.val_path: '" + data.val_path + "' does not exist");
    }
  }
  return v;
}

RunConfig parse_run_config(std::istream& in, const std::vector<std::string>& overrides, DataCheck data_check) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError({std::string("config: ") + e.message() + " at line " + std::to_string(e.line())});
  }
  RunConfig cfg;
  std::vector<std::string> errors;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      errors.push_back(section + ": key outside any section");
      continue;
    }
    for (const auto& [name, value] : body) apply(cfg, section, name, value.data(), errors);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      errors.push_back("override '" + o + "': expected section.key=value");
      continue;
    }
    apply(cfg, o.substr(0, dot), o.substr(dot + 1, eq - dot - 1), o.substr(eq + 1), errors);
  }
  cfg.model.final_image_size = cfg.schedule.final_size;
  cfg.schedule.patch_size = cfg.model.patch_size;
  if (errors.empty()) errors = cfg.validate(data_check);
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

RunConfig parse_run_config(const std::string& text, const std::vector<std::string>& overrides, DataCheck data_check) {
  std::istringstream in(text);
  return parse_run_config(in, overrides, data_check);
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                          DataCheck data_check) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open '" + path.string() + "'"});
  return parse_run_config(in, overrides, data_check);
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : keys()) {
    if (section != k.section) {
      if (!section.empty()) out << '\n';
      section = k.section;
      out << '[' << section << "]\n";
    }
    const std::string value = k.get(cfg);
    if (!value.empty()) out << k.name << " = " << value << '\n';
  }
  return out.str();
}

Dataset load_train_dataset(const DataConfig& data) {
  if (data.format == DataFormat::Synthetic) {
    return synthetic_dataset(data.synthetic_classes, data.synthetic_train_per_class, data.synthetic_size,
                             data.synthetic_seed, Split::Train);
  }
  return load_dataset(data.path, data.format, Split::Train);
}

Dataset load_val_dataset(const DataConfig& data) {
  if (data.format == DataFormat::Synthetic) {
    return synthetic_dataset(data.synthetic_classes, data.synthetic_val_per_class, data.synthetic_size,
                             data.synthetic_seed, Split::Val);
  }
  if (data.val_path.empty()) {
    // A binary-record directory carries its own test split.
    if (data.format == DataFormat::BinaryRecord && std::filesystem::is_directory(data.path)) {
      return load_dataset(data.path, data.format, Split::Val);
    }
    throw IngestionError("data.val_path: required for format " + to_string(data.format));
  }
  return load_dataset(data.val_path, data.format, Split::Val);
}

}  // namespace budgetvit
