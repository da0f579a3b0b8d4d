#include "sdq/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "sdq/errors.hpp"

namespace sdq {

namespace {

std::string dtoa(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  check_contract(ec == std::errc(), "config: unprintable double");
  return std::string(buf, ptr);
}

double atod(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  check_contract(ec == std::errc() && ptr == s.data() + s.size(),
                 "config: bad real value '" + s + "'");
  return v;
}

template <typename T>
T atoi_checked(const std::string& s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  check_contract(ec == std::errc() && ptr == s.data() + s.size(),
                 "config: bad integer value '" + s + "'");
  return v;
}

std::string optim_name(OptimSpec::Kind k) {
  switch (k) {
    case OptimSpec::Kind::kSgd: return "sgd";
    case OptimSpec::Kind::kAdam: return "adam";
    case OptimSpec::Kind::kAdamW: return "adamw";
  }
  throw ContractError("unreachable optimizer kind");
}

std::string schedule_name(LrSchedule::Kind k) {
  switch (k) {
    case LrSchedule::Kind::kConstant: return "constant";
    case LrSchedule::Kind::kCosine: return "cosine";
    case LrSchedule::Kind::kMultistep: return "multistep";
  }
  throw ContractError("unreachable schedule kind");
}

template <typename T>
std::string join_ints(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

template <typename T>
std::vector<T> split_ints(const std::string& s) {
  std::vector<T> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::string piece =
        s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    out.push_back(atoi_checked<T>(piece));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// One bound field: how to print the current value and how to assign a parsed
// string back. The schema below is the single source of truth for both
// directions.
struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

void bind_optim(std::vector<Field>& fields, const std::string& section,
                const std::string& prefix, OptimSpec RunConfig::*member) {
  auto ref = [member](RunConfig& c) -> OptimSpec& { return c.*member; };
  auto cref = [member](const RunConfig& c) -> const OptimSpec& { return c.*member; };
  fields.push_back({section, prefix + "optimizer",
                    [cref](const RunConfig& c) { return optim_name(cref(c).kind); },
                    [ref](RunConfig& c, const std::string& v) {
                      ref(c).kind = parse_optim_kind(v);
                    }});
  fields.push_back({section, prefix + "lr",
                    [cref](const RunConfig& c) { return dtoa(cref(c).lr); },
                    [ref](RunConfig& c, const std::string& v) { ref(c).lr = atod(v); }});
  fields.push_back({section, prefix + "momentum",
                    [cref](const RunConfig& c) { return dtoa(cref(c).momentum); },
                    [ref](RunConfig& c, const std::string& v) { ref(c).momentum = atod(v); }});
  fields.push_back({section, prefix + "weight_decay",
                    [cref](const RunConfig& c) { return dtoa(cref(c).weight_decay); },
                    [ref](RunConfig& c, const std::string& v) {
                      ref(c).weight_decay = atod(v);
                    }});
}

void bind_schedule(std::vector<Field>& fields, const std::string& section,
                   const std::string& prefix, LrSchedule RunConfig::*member) {
  auto ref = [member](RunConfig& c) -> LrSchedule& { return c.*member; };
  auto cref = [member](const RunConfig& c) -> const LrSchedule& { return c.*member; };
  fields.push_back({section, prefix + "schedule",
                    [cref](const RunConfig& c) { return schedule_name(cref(c).kind); },
                    [ref](RunConfig& c, const std::string& v) {
                      ref(c).kind = parse_schedule_kind(v);
                    }});
  fields.push_back({section, prefix + "milestones",
                    [cref](const RunConfig& c) { return join_ints(cref(c).milestones); },
                    [ref](RunConfig& c, const std::string& v) {
                      ref(c).milestones = split_ints<std::size_t>(v);
                    }});
  fields.push_back({section, prefix + "gamma",
                    [cref](const RunConfig& c) { return dtoa(cref(c).gamma); },
                    [ref](RunConfig& c, const std::string& v) { ref(c).gamma = atod(v); }});
}

std::vector<Field> schema() {
  std::vector<Field> f;
  auto add = [&f](std::string section, std::string key, auto get, auto set) {
    f.push_back({std::move(section), std::move(key), get, set});
  };
  auto b2s = [](bool b) { return std::string(b ? "true" : "false"); };
  auto s2b = [](const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ContractError("config: bad boolean '" + v + "'");
  };

  add("run", "seed", [](const RunConfig& c) { return std::to_string(c.seed); },
      [](RunConfig& c, const std::string& v) { c.seed = atoi_checked<std::uint64_t>(v); });
  add("run", "out_dir", [](const RunConfig& c) { return c.out_dir; },
      [](RunConfig& c, const std::string& v) { c.out_dir = v; });

  add("model", "id", [](const RunConfig& c) { return c.model.id; },
      [](RunConfig& c, const std::string& v) { c.model.id = v; });
  add("model", "input_features",
      [](const RunConfig& c) { return std::to_string(c.model.input_features); },
      [](RunConfig& c, const std::string& v) {
        c.model.input_features = atoi_checked<std::size_t>(v);
      });
  add("model", "classes", [](const RunConfig& c) { return std::to_string(c.model.classes); },
      [](RunConfig& c, const std::string& v) {
        c.model.classes = atoi_checked<std::size_t>(v);
      });
  add("model", "hidden", [](const RunConfig& c) { return join_ints(c.model.hidden); },
      [](RunConfig& c, const std::string& v) {
        c.model.hidden = split_ints<std::size_t>(v);
      });
  add("model", "base_channels",
      [](const RunConfig& c) { return std::to_string(c.model.base_channels); },
      [](RunConfig& c, const std::string& v) {
        c.model.base_channels = atoi_checked<std::size_t>(v);
      });
  add("model", "image_hw", [](const RunConfig& c) { return std::to_string(c.model.image_hw); },
      [](RunConfig& c, const std::string& v) {
        c.model.image_hw = atoi_checked<std::size_t>(v);
      });

  add("data", "generator", [](const RunConfig& c) { return c.data.generator; },
      [](RunConfig& c, const std::string& v) { c.data.generator = v; });
  add("data", "samples", [](const RunConfig& c) { return std::to_string(c.data.samples); },
      [](RunConfig& c, const std::string& v) {
        c.data.samples = atoi_checked<std::size_t>(v);
      });
  add("data", "classes", [](const RunConfig& c) { return std::to_string(c.data.classes); },
      [](RunConfig& c, const std::string& v) {
        c.data.classes = atoi_checked<std::size_t>(v);
      });
  add("data", "noise", [](const RunConfig& c) { return dtoa(c.data.noise); },
      [](RunConfig& c, const std::string& v) { c.data.noise = atod(v); });
  add("data", "train_fraction", [](const RunConfig& c) { return dtoa(c.data.train_fraction); },
      [](RunConfig& c, const std::string& v) { c.data.train_fraction = atod(v); });
  add("data", "seed", [](const RunConfig& c) { return std::to_string(c.data.seed); },
      [](RunConfig& c, const std::string& v) {
        c.data.seed = atoi_checked<std::uint64_t>(v);
      });

  add("phase1", "lambda_q", [](const RunConfig& c) { return dtoa(c.phase1.lambda_q); },
      [](RunConfig& c, const std::string& v) { c.phase1.lambda_q = atod(v); });
  add("phase1", "beta_threshold",
      [](const RunConfig& c) { return dtoa(c.phase1.beta_threshold); },
      [](RunConfig& c, const std::string& v) { c.phase1.beta_threshold = atod(v); });
  add("phase1", "epochs", [](const RunConfig& c) { return std::to_string(c.phase1.epochs); },
      [](RunConfig& c, const std::string& v) {
        c.phase1.epochs = atoi_checked<std::size_t>(v);
      });
  add("phase1", "candidates", [](const RunConfig& c) { return join_ints(c.phase1.candidates); },
      [](RunConfig& c, const std::string& v) { c.phase1.candidates = split_ints<int>(v); });
  add("phase1", "activation_bits",
      [](const RunConfig& c) { return std::to_string(c.phase1.activation_bits); },
      [](RunConfig& c, const std::string& v) {
        c.phase1.activation_bits = atoi_checked<int>(v);
      });
  add("phase1", "pinned_bits",
      [](const RunConfig& c) { return std::to_string(c.phase1.pinned_bits); },
      [](RunConfig& c, const std::string& v) {
        c.phase1.pinned_bits = atoi_checked<int>(v);
      });
  add("phase1", "granularity",
      [](const RunConfig& c) { return granularity_name(c.phase1.granularity); },
      [](RunConfig& c, const std::string& v) { c.phase1.granularity = parse_granularity(v); });
  add("phase1", "normalize", [b2s](const RunConfig& c) { return b2s(c.phase1.normalize); },
      [s2b](RunConfig& c, const std::string& v) { c.phase1.normalize = s2b(v); });
  add("phase1", "decay_per_step",
      [b2s](const RunConfig& c) { return b2s(c.phase1.decay_per_step); },
      [s2b](RunConfig& c, const std::string& v) { c.phase1.decay_per_step = s2b(v); });
  add("phase1", "per_sample_choice",
      [b2s](const RunConfig& c) { return b2s(c.phase1.per_sample_choice); },
      [s2b](RunConfig& c, const std::string& v) { c.phase1.per_sample_choice = s2b(v); });
  add("phase1", "gumbel_temperature",
      [](const RunConfig& c) { return dtoa(c.phase1.gumbel.temperature); },
      [](RunConfig& c, const std::string& v) { c.phase1.gumbel.temperature = atod(v); });
  add("phase1", "gumbel_hard", [b2s](const RunConfig& c) { return b2s(c.phase1.gumbel.hard); },
      [s2b](RunConfig& c, const std::string& v) { c.phase1.gumbel.hard = s2b(v); });
  add("phase1", "batch_size", [](const RunConfig& c) { return std::to_string(c.p1_batch); },
      [](RunConfig& c, const std::string& v) { c.p1_batch = atoi_checked<std::size_t>(v); });
  bind_optim(f, "phase1", "weight_", &RunConfig::p1_weight_opt);
  bind_optim(f, "phase1", "dbp_", &RunConfig::p1_dbp_opt);
  bind_schedule(f, "phase1", "", &RunConfig::p1_schedule);

  add("phase2", "lambda_e", [](const RunConfig& c) { return dtoa(c.phase2.lambda_e); },
      [](RunConfig& c, const std::string& v) { c.phase2.lambda_e = atod(v); });
  add("phase2", "epochs", [](const RunConfig& c) { return std::to_string(c.phase2.epochs); },
      [](RunConfig& c, const std::string& v) {
        c.phase2.epochs = atoi_checked<std::size_t>(v);
      });
  add("phase2", "min_var_count",
      [](const RunConfig& c) { return std::to_string(c.phase2.min_var_count); },
      [](RunConfig& c, const std::string& v) {
        c.phase2.min_var_count = atoi_checked<int>(v);
      });
  add("phase2", "normalize", [b2s](const RunConfig& c) { return b2s(c.phase2.normalize); },
      [s2b](RunConfig& c, const std::string& v) { c.phase2.normalize = s2b(v); });
  add("phase2", "batch_size", [](const RunConfig& c) { return std::to_string(c.p2_batch); },
      [](RunConfig& c, const std::string& v) { c.p2_batch = atoi_checked<std::size_t>(v); });
  bind_optim(f, "phase2", "", &RunConfig::p2_opt);
  bind_schedule(f, "phase2", "", &RunConfig::p2_schedule);

  add("teacher", "epochs", [](const RunConfig& c) { return std::to_string(c.teacher_epochs); },
      [](RunConfig& c, const std::string& v) {
        c.teacher_epochs = atoi_checked<std::size_t>(v);
      });
  bind_optim(f, "teacher", "", &RunConfig::teacher_opt);
  return f;
}

}  // namespace

std::string serialize_config(const RunConfig& c) {
  std::ostringstream out;
  std::string section;
  for (const Field& field : schema()) {
    if (field.section != section) {
      if (!section.empty()) out << "\n";
      section = field.section;
      out << "[" << section << "]\n";
    }
    out << field.key << " = " << field.get(c) << "\n";
  }
  return out.str();
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  const auto fields = schema();
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fail = [line_no](const std::string& msg) -> void {
      throw ContractError("config line " + std::to_string(line_no) + ": " + msg);
    };
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // Trim both ends.
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);

    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = line.substr(1, line.size() - 2);
      bool known = false;
      for (const Field& field : fields) known |= field.section == section;
      if (!known) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto kend = key.find_last_not_of(" \t");
    key = key.substr(0, kend == std::string::npos ? 0 : kend + 1);
    const auto vstart = value.find_first_not_of(" \t");
    value = vstart == std::string::npos ? "" : value.substr(vstart);

    bool matched = false;
    for (const Field& field : fields) {
      if (field.section == section && field.key == key) {
        try {
          field.set(c, value);
        } catch (const ContractError& e) {
          fail(e.what());
        }
        matched = true;
        break;
      }
    }
    if (!matched) fail("unknown key '" + key + "' in section [" + section + "]");
  }
  return c;
}

void write_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path, std::ios::binary);
  check_contract(static_cast<bool>(out), "cannot open config for write: " + path);
  out << serialize_config(c);
  check_contract(static_cast<bool>(out), "short write to config: " + path);
}

RunConfig read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_contract(static_cast<bool>(in), "cannot open config: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

bool config_equal(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace sdq
