#include "sdq/strategy.hpp"

#include <fstream>
#include <sstream>

#include "sdq/errors.hpp"

namespace sdq {

double MpqStrategy::avg_weight_bits() const {
  check_contract(!layers.empty(), "avg_weight_bits on empty strategy");
  double num = 0.0;
  double den = 0.0;
  for (const auto& l : layers) {
    num += static_cast<double>(l.bits) * static_cast<double>(l.params);
    den += static_cast<double>(l.params);
  }
  check_contract(den > 0.0, "avg_weight_bits with zero total params");
  return num / den;
}

std::size_t MpqStrategy::total_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.params;
  return n;
}

const LayerChoice& MpqStrategy::layer(const std::string& name) const {
  for (const auto& l : layers) {
    if (l.name == name) return l;
  }
  throw ContractError("strategy has no layer '" + name + "'");
}

std::string serialize_strategy(const MpqStrategy& s) {
  std::ostringstream out;
  out << "sdq-strategy v1\n";
  out << "model " << s.model_id << "\n";
  out << "activation_bits " << s.activation_bits << "\n";
  out << "candidates";
  for (int b : s.candidates) out << ' ' << b;
  out << "\n";
  out << "layers " << s.layers.size() << "\n";
  for (const auto& l : s.layers) {
    out << l.name << ' ' << l.bits << ' ' << l.params << ' ' << (l.pinned ? "pinned" : "-")
        << "\n";
  }
  return out.str();
}

namespace {

[[noreturn]] void fail_at(std::size_t line_no, const std::string& msg) {
  throw ContractError("strategy line " + std::to_string(line_no) + ": " + msg);
}

}  // namespace

MpqStrategy parse_strategy(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) fail_at(line_no + 1, std::string("missing ") + what);
    ++line_no;
    return line;
  };

  if (next_line("format tag") != "sdq-strategy v1") fail_at(line_no, "bad format tag");

  MpqStrategy s;
  {
    std::istringstream ls(next_line("model line"));
    std::string key;
    if (!(ls >> key >> s.model_id) || key != "model") fail_at(line_no, "want 'model <id>'");
  }
  {
    std::istringstream ls(next_line("activation_bits line"));
    std::string key;
    if (!(ls >> key >> s.activation_bits) || key != "activation_bits")
      fail_at(line_no, "want 'activation_bits <int>'");
  }
  {
    std::istringstream ls(next_line("candidates line"));
    std::string key;
    if (!(ls >> key) || key != "candidates") fail_at(line_no, "want 'candidates <b...>'");
    int b = 0;
    while (ls >> b) s.candidates.push_back(b);
    if (s.candidates.empty()) fail_at(line_no, "empty candidate list");
  }
  std::size_t count = 0;
  {
    std::istringstream ls(next_line("layer count"));
    std::string key;
    if (!(ls >> key >> count) || key != "layers") fail_at(line_no, "want 'layers <count>'");
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream ls(next_line("layer record"));
    LayerChoice l;
    std::string tag;
    if (!(ls >> l.name >> l.bits >> l.params >> tag))
      fail_at(line_no, "want '<name> <bits> <params> <pinned|->'");
    if (tag == "pinned") {
      l.pinned = true;
    } else if (tag == "-") {
      l.pinned = false;
    } else {
      fail_at(line_no, "bad pinned tag '" + tag + "'");
    }
    if (l.bits < 1) fail_at(line_no, "bits must be >= 1");
    s.layers.push_back(std::move(l));
  }
  return s;
}

void write_strategy(const std::string& path, const MpqStrategy& s) {
  std::ofstream out(path, std::ios::binary);
  check_contract(static_cast<bool>(out), "cannot open strategy file for write: " + path);
  out << serialize_strategy(s);
  check_contract(static_cast<bool>(out), "short write to strategy file: " + path);
}

MpqStrategy read_strategy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_contract(static_cast<bool>(in), "cannot open strategy file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_strategy(buf.str());
}

}  // namespace sdq
