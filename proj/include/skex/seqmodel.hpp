#pragma once

// Sketch-and-extrude command sequences: the continuous form (CadSequence),
// the quantized form (TokenMatrix), JSON and binary serialization, logit
// decoding and structural validation.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "skex/error.hpp"
#include "skex/vec.hpp"

namespace skex {

inline constexpr std::size_t kMaxCommands = 60;
inline constexpr std::size_t kSlotCount = 16;
inline constexpr std::size_t kTypeCount = 6;
inline constexpr int kQuantLevels = 256;
inline constexpr int kMaxToken = kQuantLevels - 1;
inline constexpr std::int16_t kUnusedToken = -1;
inline constexpr double kUnusedValue = -1.0;
inline constexpr double kPi = 3.14159265358979323846;

// Closure tolerance for loops whose coordinates came from tokens.
inline constexpr double kDequantizedClosureTol = 1.0 / kMaxToken;

enum class CommandType : std::uint8_t { SOL = 0, Line = 1, Arc = 2, Circle = 3, Extrude = 4, EOS = 5 };

enum class Slot : std::uint8_t {
  X, Y, Alpha, Flag, Radius, Theta, Phi, Gamma, Px, Py, Pz, Scale, E1, E2, Boolean, ExtrudeType
};

enum class BooleanOp : std::uint8_t { NewBody = 0, Join = 1, Cut = 2, Intersect = 3 };
enum class ExtrudeKind : std::uint8_t { OneSided = 0, Symmetric = 1, TwoSided = 2 };

inline constexpr std::array<std::string_view, kTypeCount> kTypeNames = {
    "SOL", "Line", "Arc", "Circle", "Extrude", "EOS"};

inline constexpr std::array<std::string_view, kSlotCount> kSlotNames = {
    "x", "y", "alpha", "f", "r", "theta", "phi", "gamma",
    "px", "py", "pz", "s", "e1", "e2", "b", "u"};

constexpr std::size_t index(Slot s) { return static_cast<std::size_t>(s); }
constexpr std::size_t index(CommandType t) { return static_cast<std::size_t>(t); }

inline std::string_view to_string(CommandType t) { return kTypeNames[index(t)]; }

inline std::optional<CommandType> command_type_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kTypeCount; ++i)
    if (kTypeNames[i] == name) return static_cast<CommandType>(i);
  return std::nullopt;
}

// Bit i set iff the command type uses slot i.
constexpr std::uint16_t slot_mask(CommandType t) {
  auto bit = [](Slot s) { return static_cast<std::uint16_t>(1u << index(s)); };
  switch (t) {
    case CommandType::Line:
      return bit(Slot::X) | bit(Slot::Y);
    case CommandType::Arc:
      return bit(Slot::X) | bit(Slot::Y) | bit(Slot::Alpha) | bit(Slot::Flag);
    case CommandType::Circle:
      return bit(Slot::X) | bit(Slot::Y) | bit(Slot::Radius);
    case CommandType::Extrude:
      return bit(Slot::Theta) | bit(Slot::Phi) | bit(Slot::Gamma) | bit(Slot::Px) | bit(Slot::Py) |
             bit(Slot::Pz) | bit(Slot::Scale) | bit(Slot::E1) | bit(Slot::E2) | bit(Slot::Boolean) |
             bit(Slot::ExtrudeType);
    default:
      return 0;
  }
}

constexpr bool uses_slot(CommandType t, std::size_t slot) { return (slot_mask(t) >> slot) & 1u; }
constexpr int used_slot_count(CommandType t) { return std::popcount(slot_mask(t)); }
constexpr bool is_curve(CommandType t) {
  return t == CommandType::Line || t == CommandType::Arc || t == CommandType::Circle;
}

constexpr bool is_discrete(std::size_t slot) {
  return slot == index(Slot::Flag) || slot == index(Slot::Boolean) || slot == index(Slot::ExtrudeType);
}

// Largest integer code of a discrete slot.
constexpr int discrete_max(std::size_t slot) {
  if (slot == index(Slot::Flag)) return 1;
  if (slot == index(Slot::Boolean)) return 3;
  if (slot == index(Slot::ExtrudeType)) return 2;
  return 0;
}

struct ExtrudeParams {
  double theta = 0.0;
  double phi = 0.0;
  double gamma = 0.0;
  double px = 0.0;
  double py = 0.0;
  double pz = 0.0;
  double scale = 1.0;
  double e1 = 0.0;
  double e2 = 0.0;
  BooleanOp boolean = BooleanOp::NewBody;
  ExtrudeKind kind = ExtrudeKind::OneSided;
};

// One command. Parameters live in 16 normalized slots; slots the type does
// not use hold kUnusedValue.
struct Command {
  CommandType type = CommandType::EOS;
  std::array<double, kSlotCount> params = filled(kUnusedValue);

  double operator[](Slot s) const { return params[index(s)]; }
  double& operator[](Slot s) { return params[index(s)]; }

  bool operator==(const Command&) const = default;

  Vec2 point() const { return {params[index(Slot::X)], params[index(Slot::Y)]}; }
  bool ccw() const { return params[index(Slot::Flag)] != 0.0; }
  BooleanOp boolean() const { return static_cast<BooleanOp>(static_cast<int>(params[index(Slot::Boolean)])); }
  ExtrudeKind extrude_kind() const {
    return static_cast<ExtrudeKind>(static_cast<int>(params[index(Slot::ExtrudeType)]));
  }

  static Command sol() { return Command{CommandType::SOL}; }
  static Command eos() { return Command{CommandType::EOS}; }
  static Command line(double x, double y) {
    Command c{CommandType::Line};
    c[Slot::X] = x;
    c[Slot::Y] = y;
    return c;
  }
  static Command arc(double x, double y, double alpha, bool ccw) {
    Command c{CommandType::Arc};
    c[Slot::X] = x;
    c[Slot::Y] = y;
    c[Slot::Alpha] = alpha;
    c[Slot::Flag] = ccw ? 1.0 : 0.0;
    return c;
  }
  static Command circle(double x, double y, double r) {
    Command c{CommandType::Circle};
    c[Slot::X] = x;
    c[Slot::Y] = y;
    c[Slot::Radius] = r;
    return c;
  }
  static Command extrude(const ExtrudeParams& e) {
    Command c{CommandType::Extrude};
    c[Slot::Theta] = e.theta;
    c[Slot::Phi] = e.phi;
    c[Slot::Gamma] = e.gamma;
    c[Slot::Px] = e.px;
    c[Slot::Py] = e.py;
    c[Slot::Pz] = e.pz;
    c[Slot::Scale] = e.scale;
    c[Slot::E1] = e.e1;
    c[Slot::E2] = e.e2;
    c[Slot::Boolean] = static_cast<double>(e.boolean);
    c[Slot::ExtrudeType] = static_cast<double>(e.kind);
    return c;
  }

 private:
  static constexpr std::array<double, kSlotCount> filled(double v) {
    std::array<double, kSlotCount> a{};
    a.fill(v);
    return a;
  }
};

struct CadSequence {
  std::vector<Command> commands;

  bool operator==(const CadSequence&) const = default;
  std::size_t size() const { return commands.size(); }
};

struct TokenRow {
  std::uint8_t type = static_cast<std::uint8_t>(CommandType::EOS);
  std::array<std::int16_t, kSlotCount> params = unused();

  bool operator==(const TokenRow&) const = default;

  CommandType command_type() const { return static_cast<CommandType>(type); }

  static constexpr std::array<std::int16_t, kSlotCount> unused() {
    std::array<std::int16_t, kSlotCount> a{};
    a.fill(kUnusedToken);
    return a;
  }
};

// Always exactly kMaxCommands rows; trailing rows are EOS padding.
struct TokenMatrix {
  std::vector<TokenRow> rows = std::vector<TokenRow>(kMaxCommands);

  bool operator==(const TokenMatrix&) const = default;

  // Number of rows up to and including the first EOS (kMaxCommands if none).
  std::size_t length() const {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].command_type() == CommandType::EOS) return i + 1;
    return rows.size();
  }
};

// ---------------------------------------------------------------------------
// Grammar

namespace detail {

struct GrammarViolation {
  std::size_t index;
  std::string message;
};

// Walks the sequence as a state machine and reports every order violation.
inline std::vector<GrammarViolation> grammar_violations(const CadSequence& seq) {
  std::vector<GrammarViolation> out;
  bool in_loop = false;
  int loop_curves = 0;
  bool loop_has_circle = false;
  int pending_loops = 0;
  bool seen_eos = false;

  auto close_loop = [&](std::size_t i) {
    if (in_loop && loop_curves == 0) out.push_back({i, "loop has no curve commands"});
    in_loop = false;
  };

  for (std::size_t i = 0; i < seq.commands.size(); ++i) {
    const CommandType t = seq.commands[i].type;
    if (seen_eos) {
      out.push_back({i, "command after EOS"});
      continue;
    }
    switch (t) {
      case CommandType::SOL:
        close_loop(i);
        in_loop = true;
        loop_curves = 0;
        loop_has_circle = false;
        ++pending_loops;
        break;
      case CommandType::Line:
      case CommandType::Arc:
      case CommandType::Circle:
        if (!in_loop) {
          out.push_back({i, "curve command outside a loop; loop must begin with SOL"});
          break;
        }
        if (loop_has_circle || (t == CommandType::Circle && loop_curves > 0))
          out.push_back({i, "a circle must be the only curve of its loop"});
        loop_has_circle = loop_has_circle || t == CommandType::Circle;
        ++loop_curves;
        break;
      case CommandType::Extrude:
        close_loop(i);
        if (pending_loops == 0) out.push_back({i, "extrude without a preceding sketch"});
        pending_loops = 0;
        break;
      case CommandType::EOS:
        close_loop(i);
        if (pending_loops > 0) out.push_back({i, "sketch not consumed by an extrude"});
        seen_eos = true;
        break;
    }
  }
  if (!seen_eos) out.push_back({seq.commands.size(), "sequence does not end with EOS"});
  if (seq.commands.size() > kMaxCommands)
    out.push_back({kMaxCommands, "sequence longer than the command cap"});
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON

inline void check_param_domain(std::size_t slot, double v, std::size_t cmd_index) {
  const std::string where = "command " + std::to_string(cmd_index) + " slot '" +
                            std::string(kSlotNames[slot]) + "'";
  if (!std::isfinite(v)) throw RangeError(where + ": non-finite value");
  if (is_discrete(slot)) {
    if (v != std::floor(v) || v < 0 || v > discrete_max(slot))
      throw RangeError(where + ": code " + std::to_string(v) + " outside 0.." +
                       std::to_string(discrete_max(slot)));
  } else if (v < 0.0 || v > 1.0) {
    throw RangeError(where + ": value " + std::to_string(v) + " outside [0, 1]");
  }
}

inline CadSequence parse_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("commands") || !doc["commands"].is_array())
    throw SchemaError("document must be an object with a 'commands' array");

  CadSequence seq;
  const auto& cmds = doc["commands"];
  seq.commands.reserve(cmds.size());
  for (std::size_t i = 0; i < cmds.size(); ++i) {
    const auto& c = cmds[i];
    const std::string at = "command " + std::to_string(i);
    if (!c.is_object() || !c.contains("type") || !c["type"].is_string())
      throw SchemaError(at + ": missing string field 'type'");
    const auto type = command_type_from_string(c["type"].get<std::string>());
    if (!type) throw SchemaError(at + ": unknown type '" + c["type"].get<std::string>() + "'");

    Command cmd{*type};
    const std::uint16_t mask = slot_mask(*type);
    std::uint16_t seen = 0;
    if (c.contains("params")) {
      const auto& p = c["params"];
      if (!p.is_object()) throw SchemaError(at + ": 'params' must be an object");
      for (const auto& [key, value] : p.items()) {
        auto it = std::find(kSlotNames.begin(), kSlotNames.end(), key);
        if (it == kSlotNames.end()) throw SchemaError(at + ": unknown parameter '" + key + "'");
        const auto slot = static_cast<std::size_t>(it - kSlotNames.begin());
        if (!((mask >> slot) & 1u))
          throw SchemaError(at + ": parameter '" + key + "' not used by " + std::string(to_string(*type)));
        if (!value.is_number()) throw SchemaError(at + ": parameter '" + key + "' must be a number");
        cmd.params[slot] = value.get<double>();
        seen |= static_cast<std::uint16_t>(1u << slot);
      }
    }
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (!((mask >> s) & 1u)) continue;
      if (!((seen >> s) & 1u))
        throw SchemaError(at + ": missing parameter '" + std::string(kSlotNames[s]) + "'");
      check_param_domain(s, cmd.params[s], i);
    }
    seq.commands.push_back(cmd);
  }

  const auto violations = detail::grammar_violations(seq);
  if (!violations.empty())
    throw GrammarError("command " + std::to_string(violations.front().index) + ": " +
                       violations.front().message);
  return seq;
}

inline CadSequence parse_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
  return parse_json(doc);
}

inline CadSequence parse_json(const std::string& text) { return parse_json(std::string_view(text)); }
inline CadSequence parse_json(const char* text) { return parse_json(std::string_view(text)); }

inline nlohmann::ordered_json to_json(const CadSequence& seq) {
  nlohmann::ordered_json cmds = nlohmann::ordered_json::array();
  for (const auto& c : seq.commands) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (!uses_slot(c.type, s)) continue;
      if (is_discrete(s))
        params[std::string(kSlotNames[s])] = static_cast<int>(c.params[s]);
      else
        params[std::string(kSlotNames[s])] = c.params[s];
    }
    cmds.push_back({{"type", std::string(to_string(c.type))}, {"params", std::move(params)}});
  }
  return {{"commands", std::move(cmds)}};
}

// nlohmann emits the shortest decimal that round-trips each double.
inline std::string serialize_json(const CadSequence& seq, int indent = -1) {
  return to_json(seq).dump(indent);
}

// ---------------------------------------------------------------------------
// Quantization

inline std::int16_t quantize_value(double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw RangeError("continuous value " + std::to_string(v) + " outside [0, 1]");
  // std::round rounds half away from zero.
  return static_cast<std::int16_t>(std::round(v * kMaxToken));
}

inline double dequantize_value(std::int16_t token) { return static_cast<double>(token) / kMaxToken; }

inline TokenMatrix quantize(const CadSequence& seq) {
  if (seq.size() > kMaxCommands)
    throw RangeError("sequence of " + std::to_string(seq.size()) + " commands exceeds the cap of " +
                     std::to_string(kMaxCommands));
  TokenMatrix m;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const Command& c = seq.commands[i];
    TokenRow& row = m.rows[i];
    row.type = static_cast<std::uint8_t>(c.type);
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (!uses_slot(c.type, s)) continue;
      if (is_discrete(s)) {
        check_param_domain(s, c.params[s], i);
        row.params[s] = static_cast<std::int16_t>(c.params[s]);
      } else {
        row.params[s] = quantize_value(c.params[s]);
      }
    }
  }
  return m;
}

// Throws CodeError unless the row is a well-formed encoding of one command.
inline void check_row(const TokenRow& row, std::size_t i) {
  const std::string at = "row " + std::to_string(i);
  if (row.type >= kTypeCount) throw CodeError(at + ": type index " + std::to_string(row.type) + " out of range");
  const CommandType t = row.command_type();
  for (std::size_t s = 0; s < kSlotCount; ++s) {
    const int tok = row.params[s];
    if (!uses_slot(t, s)) {
      if (tok != kUnusedToken) throw CodeError(at + ": unused slot '" + std::string(kSlotNames[s]) + "' is set");
      continue;
    }
    const int hi = is_discrete(s) ? discrete_max(s) : kMaxToken;
    if (tok < 0 || tok > hi)
      throw CodeError(at + ": slot '" + std::string(kSlotNames[s]) + "' token " + std::to_string(tok) +
                      " outside 0.." + std::to_string(hi));
  }
}

inline CadSequence dequantize(const TokenMatrix& tokens) {
  if (tokens.rows.size() != kMaxCommands)
    throw ShapeError("token matrix must have " + std::to_string(kMaxCommands) + " rows");
  CadSequence seq;
  bool ended = false;
  for (std::size_t i = 0; i < tokens.rows.size(); ++i) {
    const TokenRow& row = tokens.rows[i];
    check_row(row, i);
    if (ended) {
      if (row.command_type() != CommandType::EOS)
        throw CodeError("row " + std::to_string(i) + ": non-EOS row after EOS");
      continue;
    }
    Command c{row.command_type()};
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (!uses_slot(c.type, s)) continue;
      c.params[s] = is_discrete(s) ? static_cast<double>(row.params[s]) : dequantize_value(row.params[s]);
    }
    seq.commands.push_back(c);
    ended = c.type == CommandType::EOS;
  }
  if (!ended) throw CodeError("token matrix has no EOS row");
  return seq;
}

// Binary form: "SKEX", u16 version, u16 row count, then per row u8 type and
// 16 x i16 parameters. Little-endian throughout.
inline constexpr std::uint16_t kTokenFormatVersion = 1;

inline void write_tokens(std::ostream& os, const TokenMatrix& m) {
  auto put16 = [&](std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
  };
  os.write("SKEX", 4);
  put16(kTokenFormatVersion);
  put16(static_cast<std::uint16_t>(m.rows.size()));
  for (const TokenRow& r : m.rows) {
    os.put(static_cast<char>(r.type));
    for (std::int16_t p : r.params) put16(static_cast<std::uint16_t>(p));
  }
  if (!os) throw IoError("failed to write token matrix");
}

inline TokenMatrix read_tokens(std::istream& is) {
  auto get16 = [&]() -> std::uint16_t {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) throw SchemaError("truncated token file");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  };
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "SKEX") throw SchemaError("bad token file magic");
  if (const auto v = get16(); v != kTokenFormatVersion)
    throw SchemaError("unsupported token file version " + std::to_string(v));
  const std::uint16_t rows = get16();
  if (rows != kMaxCommands) throw ShapeError("token file has " + std::to_string(rows) + " rows");
  TokenMatrix m;
  for (TokenRow& r : m.rows) {
    const int t = is.get();
    if (t == std::char_traits<char>::eof()) throw SchemaError("truncated token file");
    r.type = static_cast<std::uint8_t>(t);
    for (std::int16_t& p : r.params) p = static_cast<std::int16_t>(get16());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Logit decoding

// Decoder outputs for one sequence: command-type logits (rows x 6) and
// parameter logits (rows x 16 x 256), row-major.
struct Logits {
  std::size_t rows = kMaxCommands;
  std::vector<double> command = std::vector<double>(kMaxCommands * kTypeCount, 0.0);
  std::vector<double> param = std::vector<double>(kMaxCommands * kSlotCount * kQuantLevels, 0.0);

  double& cmd(std::size_t r, std::size_t k) { return command[r * kTypeCount + k]; }
  double cmd(std::size_t r, std::size_t k) const { return command[r * kTypeCount + k]; }
  double& prm(std::size_t r, std::size_t s, std::size_t l) { return param[(r * kSlotCount + s) * kQuantLevels + l]; }
  double prm(std::size_t r, std::size_t s, std::size_t l) const {
    return param[(r * kSlotCount + s) * kQuantLevels + l];
  }

  // Logits with value `margin` at the target of every token and 0 elsewhere.
  // Unused slots get a one-hot at level 0 so every row is fully specified.
  static Logits one_hot(const TokenMatrix& m, double margin = 1.0) {
    Logits l;
    for (std::size_t r = 0; r < kMaxCommands; ++r) {
      l.cmd(r, m.rows[r].type) = margin;
      for (std::size_t s = 0; s < kSlotCount; ++s) {
        const int tok = m.rows[r].params[s];
        l.prm(r, s, tok < 0 ? 0 : static_cast<std::size_t>(tok)) = margin;
      }
    }
    return l;
  }
};

inline void check_logits(const Logits& l) {
  if (l.rows != kMaxCommands || l.command.size() != l.rows * kTypeCount ||
      l.param.size() != l.rows * kSlotCount * kQuantLevels)
    throw ShapeError("logits must be " + std::to_string(kMaxCommands) + "x6 and " +
                     std::to_string(kMaxCommands) + "x16x256");
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!finite(l.command) || !finite(l.param)) throw NaNError("non-finite logit");
}

namespace detail {
// First index of the maximum; ties resolve to the lowest index.
template <typename It>
std::size_t argmax(It first, It last) {
  return static_cast<std::size_t>(std::max_element(first, last) - first);
}
}  // namespace detail

inline TokenMatrix decode_logits(const Logits& logits) {
  check_logits(logits);
  TokenMatrix m;
  for (std::size_t r = 0; r < kMaxCommands; ++r) {
    const auto* row = logits.command.data() + r * kTypeCount;
    const auto type = static_cast<CommandType>(detail::argmax(row, row + kTypeCount));
    TokenRow& out = m.rows[r];
    out.type = static_cast<std::uint8_t>(type);
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (!uses_slot(type, s)) continue;
      const auto* lv = logits.param.data() + (r * kSlotCount + s) * kQuantLevels;
      out.params[s] = static_cast<std::int16_t>(detail::argmax(lv, lv + kQuantLevels));
    }
    if (type == CommandType::EOS) break;  // remaining rows stay EOS padding
  }
  return m;
}

// ---------------------------------------------------------------------------
// Validation

enum class FailureCode : std::uint8_t {
  GrammarOrder,
  OpenLoop,
  DegenerateCurve,
  ZeroExtrusion,
  NoExtrusion,
  FirstBooleanNotNew,
};

inline std::string_view to_string(FailureCode c) {
  switch (c) {
    case FailureCode::GrammarOrder: return "grammar_order";
    case FailureCode::OpenLoop: return "open_loop";
    case FailureCode::DegenerateCurve: return "degenerate_curve";
    case FailureCode::ZeroExtrusion: return "zero_extrusion";
    case FailureCode::NoExtrusion: return "no_extrusion";
    case FailureCode::FirstBooleanNotNew: return "first_boolean_not_new";
  }
  return "unknown";
}

struct ValidationFailure {
  std::size_t index;
  FailureCode code;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationFailure> failures;

  bool valid() const { return failures.empty(); }
  bool has(FailureCode c) const {
    return std::any_of(failures.begin(), failures.end(), [c](const auto& f) { return f.code == c; });
  }
};

struct ValidateOptions {
  // Loops close when the chain ends within this distance of its start; lines
  // shorter than this are degenerate.
  double closure_tol = 1e-6;
};

// Maps normalized slot values to geometric quantities. Sketch coordinates,
// radii, origins, scale and extents are used as-is; angles are scaled.
inline double sweep_radians(double alpha) { return alpha * 2.0 * kPi; }
inline double polar_radians(double theta) { return theta * kPi; }
inline double azimuth_radians(double phi) { return phi * 2.0 * kPi; }
inline double roll_radians(double gamma) { return gamma * 2.0 * kPi; }

// Length along the plane normal covered by an extrusion of the given kind.
inline double active_extent(ExtrudeKind kind, double e1, double e2) {
  return kind == ExtrudeKind::TwoSided ? e1 + e2 : e1;
}

// Line and arc chains start at the sketch-local origin; a circle is a
// closed loop on its own.
inline ValidationReport validate(const CadSequence& seq, const ValidateOptions& opt = {}) {
  ValidationReport rep;
  for (auto& v : detail::grammar_violations(seq))
    rep.failures.push_back({v.index, FailureCode::GrammarOrder, std::move(v.message)});

  const Vec2 origin{0.0, 0.0};
  bool in_loop = false;
  bool chain = false;  // current loop contains line/arc curves
  Vec2 pen = origin;
  std::size_t loop_start = 0;
  bool first_extrude = true;
  bool any_extrude = false;

  auto finish_loop = [&]() {
    if (in_loop && chain && norm(pen - origin) > opt.closure_tol)
      rep.failures.push_back({loop_start, FailureCode::OpenLoop,
                              "loop ends at (" + std::to_string(pen.x) + ", " + std::to_string(pen.y) +
                                  ") instead of returning to its start"});
    in_loop = false;
    chain = false;
    pen = origin;
  };

  for (std::size_t i = 0; i < seq.commands.size(); ++i) {
    const Command& c = seq.commands[i];
    switch (c.type) {
      case CommandType::SOL:
        finish_loop();
        in_loop = true;
        loop_start = i;
        break;
      case CommandType::Line:
        if (norm(c.point() - pen) <= opt.closure_tol)
          rep.failures.push_back({i, FailureCode::DegenerateCurve, "zero-length line"});
        pen = c.point();
        chain = true;
        break;
      case CommandType::Arc: {
        const double sweep = sweep_radians(c[Slot::Alpha]);
        if (!(sweep > 0.0 && sweep < 2.0 * kPi))
          rep.failures.push_back({i, FailureCode::DegenerateCurve, "arc sweep outside (0, 2pi)"});
        else if (norm(c.point() - pen) <= opt.closure_tol)
          rep.failures.push_back({i, FailureCode::DegenerateCurve, "arc endpoints coincide"});
        pen = c.point();
        chain = true;
        break;
      }
      case CommandType::Circle:
        if (!(c[Slot::Radius] > 0.0))
          rep.failures.push_back({i, FailureCode::DegenerateCurve, "zero-radius circle"});
        break;
      case CommandType::Extrude: {
        finish_loop();
        any_extrude = true;
        if (!(active_extent(c.extrude_kind(), c[Slot::E1], c[Slot::E2]) > 0.0))
          rep.failures.push_back({i, FailureCode::ZeroExtrusion, "extrusion has zero extent"});
        if (first_extrude && c.boolean() != BooleanOp::NewBody)
          rep.failures.push_back({i, FailureCode::FirstBooleanNotNew, "first extrusion is not a new body"});
        first_extrude = false;
        break;
      }
      case CommandType::EOS:
        finish_loop();
        break;
    }
  }
  if (!any_extrude)
    rep.failures.push_back({seq.commands.size(), FailureCode::NoExtrusion, "sequence has no extrusion"});
  return rep;
}

inline nlohmann::ordered_json to_json(const ValidationReport& rep) {
  nlohmann::ordered_json f = nlohmann::ordered_json::array();
  for (const auto& x : rep.failures)
    f.push_back({{"index", x.index}, {"code", std::string(to_string(x.code))}, {"message", x.message}});
  return {{"valid", rep.valid()}, {"failures", std::move(f)}};
}

}  // namespace skex
