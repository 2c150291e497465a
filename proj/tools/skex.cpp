// Command-line front end. Exit codes: 0 success, 1 some items failed,
// 2 fatal error (bad arguments, unreadable input, I/O failure).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "skex/digest.hpp"
#include "skex/generate.hpp"
#include "skex/image_io.hpp"
#include "skex/mesh_io.hpp"
#include "skex/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace skex;

namespace {

constexpr int kOk = 0;
constexpr int kItemFailures = 1;
constexpr int kFatal = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_file;
  std::optional<std::size_t> views;
  std::string out;
  unsigned threads = 0;

  Config config() const {
    Config c = config_file.empty() ? Config{} : Config::load(config_file);
    if (seed) c.seed = *seed;
    if (views) c.views = *views;
    return c;
  }
  const std::string& require_out() const {
    if (out.empty()) throw ArgumentError("--out is required");
    return out;
  }
};

void emit(const Globals& g, const std::string& text, bool to_out) {
  if (to_out && !g.out.empty())
    write_text(g.out, text);
  else
    std::cout << text;
}

// A sequence from .json, or from the binary token form (.tok).
struct Loaded {
  CadSequence seq;
  ValidateOptions vopt;
};

Loaded load_sequence(const fs::path& path, double closure_tol) {
  if (path.extension() == ".tok") {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read " + path.string());
    return {dequantize(read_tokens(is)), {kDequantizedClosureTol}};
  }
  return {parse_json(read_text(path)), {closure_tol}};
}

SolidModel load_model(const fs::path& path, const Config& cfg) {
  const Loaded l = load_sequence(path, cfg.closure_tol);
  return execute(l.seq, cfg.sagitta, l.vopt);
}

int cmd_validate(const Globals& g, const std::vector<std::string>& files) {
  const Config cfg = g.config();
  json out = json::array();
  int code = kOk;
  for (const auto& f : files) {
    json entry = {{"file", f}};
    try {
      const Loaded l = load_sequence(f, cfg.closure_tol);
      const ValidationReport rep = validate(l.seq, l.vopt);
      entry.update(json(to_json(rep)));
      if (!rep.valid()) code = kItemFailures;
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      entry["valid"] = false;
      entry["error"] = e.what();
      code = kItemFailures;
    }
    out.push_back(std::move(entry));
  }
  emit(g, out.dump(2) + "\n", true);
  return code;
}

int cmd_execute(const Globals& g, const std::string& file, std::optional<std::size_t> points, bool normalize) {
  const Config cfg = g.config();
  SolidModel model = load_model(file, cfg);
  if (normalize) model = normalize_model(model);
  const fs::path out = g.require_out();
  std::ofstream os(out, std::ios::binary);
  if (!os) throw IoError("cannot write " + out.string());
  const auto ext = out.extension();
  if (ext == ".obj") {
    write_obj(os, export_mesh(model));
  } else if (ext == ".stl") {
    write_stl(os, export_mesh(model));
  } else if (ext == ".xyz") {
    write_xyz(os, sample_surface(model, points.value_or(cfg.cd_samples), cfg.seed, cfg.sample_options()));
  } else {
    throw ArgumentError("--out must end in .obj, .stl or .xyz");
  }
  return kOk;
}

int cmd_render(const Globals& g, const std::string& file, std::optional<std::size_t> view) {
  const Config cfg = g.config();
  const TriangleMesh mesh = export_mesh(normalize_model(load_model(file, cfg)));
  const auto cams = cfg.cameras();
  const fs::path out = g.require_out();
  if (view) {
    if (*view >= cams.size()) throw ArgumentError("--view out of range");
    write_image(out, to_gray8(render(mesh, cams[*view])));
    fs::path sidecar = out;
    sidecar.replace_extension(".camera.json");
    write_text(sidecar, to_json(cams[*view]).dump(1) + "\n");
    return kOk;
  }
  fs::create_directories(out);
  parallel_for(cams.size(), g.threads, [&](std::size_t v) {
    write_png(out / detail::view_name(v, "render", ".png"), to_gray8(render(mesh, cams[v])));
    write_text(out / detail::view_name(v, "camera", ".json"), to_json(cams[v]).dump(1) + "\n");
  });
  return kOk;
}

int cmd_edgemap(const Globals& g, const std::string& image) {
  const Config cfg = g.config();
  const GrayImage img = to_float(read_image(image));
  write_image(g.require_out(), to_gray8(edge_map(img, cfg.blur_sigma, cfg.edge_low, cfg.edge_high)));
  return kOk;
}

int cmd_bind(const Globals& g, const std::string& file, std::optional<double> eps) {
  const Config cfg = g.config();
  json doc;
  try {
    doc = json::parse(read_text(file));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed proposals: ") + e.what());
  }
  const ProposalSet ps = proposals_from_json(doc);
  const Wireframe wf = skex::bind(ps.lines, ps.endpoints, eps.value_or(cfg.bind_eps));
  emit(g, to_json(wf).dump() + "\n", true);
  return kOk;
}

int cmd_gen(const Globals& g, std::size_t count) {
  const Config cfg = g.config();
  const fs::path out = g.require_out();
  fs::create_directories(out);
  SequenceGenerator gen(cfg.seed);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "gen_%05zu.json", i);
    write_text(out / name, serialize_json(gen(), 1) + "\n");
  }
  return kOk;
}

int cmd_dedup(const Globals& g, const std::string& in_dir) {
  const Config cfg = g.config();
  const fs::path out = g.require_out();
  std::vector<CadSequence> seqs;
  std::vector<fs::path> names;
  std::size_t unreadable = 0;
  for (const auto& f : list_files(in_dir, ".json")) {
    try {
      seqs.push_back(parse_json(read_text(f)));
      names.push_back(f.filename());
    } catch (const IoError&) {
      throw;
    } catch (const Error& e) {
      ++unreadable;
      std::cerr << "skip " << f.filename().string() << ": " << e.what() << '\n';
    }
  }
  const DedupResult r = dedup(seqs, {cfg.closure_tol});
  fs::create_directories(out);
  for (std::size_t k = 0; k < r.kept.size(); ++k)
    write_text(out / names[r.kept_indices[k]], serialize_json(r.kept[k], 1) + "\n");
  const json summary = {{"inputs", seqs.size() + unreadable},
                        {"unparsable", unreadable},
                        {"invalid", r.invalid},
                        {"duplicates", r.duplicates},
                        {"kept", r.kept.size()}};
  std::cout << summary.dump(2) << '\n';
  return unreadable + r.invalid > 0 ? kItemFailures : kOk;
}

int cmd_dataset(const Globals& g, const std::string& seq_dir) {
  const Config cfg = g.config();
  RunOptions run;
  run.threads = g.threads;
  run.log = &std::cerr;
  const DatasetManifest m = dataset_build(seq_dir, g.require_out(), cfg, run);
  std::cout << json(to_json(m)["counts"]).dump(2) << '\n';
  return m.parse_failures + m.skipped > 0 ? kItemFailures : kOk;
}

int cmd_eval(const Globals& g, const std::string& pred, const std::string& gt) {
  const Config cfg = g.config();
  RunOptions run;
  run.threads = g.threads;
  run.log = &std::cerr;
  const MetricReport rep = eval_run(pred, gt, cfg, run);
  emit(g, to_json(rep).dump(2) + "\n", true);
  return rep.errors.empty() ? kOk : kItemFailures;
}

Logits load_logits(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed logits: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("command") || !doc.contains("param"))
    throw SchemaError("logits document needs 'command' and 'param'");
  Logits l;
  l.command.clear();
  l.param.clear();
  // Nested arrays are flattened row-major; null entries stand for NaN.
  auto flatten = [](const json& j, std::vector<double>& out, auto& self) -> void {
    if (j.is_array()) {
      for (const auto& x : j) self(x, out, self);
    } else if (j.is_number()) {
      out.push_back(j.get<double>());
    } else if (j.is_null()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      throw SchemaError("logits must be numbers");
    }
  };
  flatten(doc["command"], l.command, flatten);
  flatten(doc["param"], l.param, flatten);
  return l;
}

int cmd_loss(const Globals& g, const std::string& logits_file, const std::string& gt_file, std::optional<double> lambda) {
  const Config cfg = g.config();
  const Logits logits = load_logits(logits_file);
  TokenMatrix gt;
  if (fs::path(gt_file).extension() == ".tok") {
    std::ifstream is(gt_file, std::ios::binary);
    if (!is) throw IoError("cannot read " + gt_file);
    gt = read_tokens(is);
  } else {
    gt = quantize(parse_json(read_text(gt_file)));
  }
  const double w = lambda.value_or(cfg.loss_lambda);
  const json out = {{"loss", loss(logits, gt, w)}, {"lambda", w}, {"rows", gt.length()}};
  emit(g, out.dump(2) + "\n", true);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch-and-extrude CAD sequence toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kToolVersion));

  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides config)");
  app.add_option("--config", g.config_file, "Flat JSON config file")->check(CLI::ExistingFile);
  app.add_option("--views", g.views, "Views per model (overrides config)");
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--threads", g.threads, "Worker threads (0: all cores)");

  std::function<int()> action;

  std::vector<std::string> validate_files;
  auto* validate_cmd = app.add_subcommand("validate", "Check sequences (.json or .tok) and report failures");
  validate_cmd->add_option("files", validate_files)->required()->check(CLI::ExistingFile);
  validate_cmd->callback([&] { action = [&] { return cmd_validate(g, validate_files); }; });

  std::string seq_file;
  std::optional<std::size_t> points;
  bool normalize = false;
  auto* execute_cmd = app.add_subcommand("execute", "Build geometry; --out picks .obj, .stl or .xyz");
  execute_cmd->add_option("sequence", seq_file)->required()->check(CLI::ExistingFile);
  execute_cmd->add_option("--points", points, "Point count for .xyz output");
  execute_cmd->add_flag("--normalize", normalize, "Center and scale to unit bounding-box diagonal");
  execute_cmd->callback([&] { action = [&] { return cmd_execute(g, seq_file, points, normalize); }; });

  std::optional<std::size_t> view;
  auto* render_cmd = app.add_subcommand("render", "Render the camera ring (or one --view) of a sequence");
  render_cmd->add_option("sequence", seq_file)->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--view", view, "Single view index; --out is then an image file");
  render_cmd->callback([&] { action = [&] { return cmd_render(g, seq_file, view); }; });

  std::string image;
  auto* edge_cmd = app.add_subcommand("edgemap", "Extract a binary edge map from a PGM/PNG image");
  edge_cmd->add_option("image", image)->required()->check(CLI::ExistingFile);
  edge_cmd->callback([&] { action = [&] { return cmd_edgemap(g, image); }; });

  std::string proposals;
  std::optional<double> eps;
  auto* bind_cmd = app.add_subcommand("bind", "Bind line proposals to endpoint proposals");
  bind_cmd->add_option("proposals", proposals)->required()->check(CLI::ExistingFile);
  bind_cmd->add_option("--eps", eps, "Binding threshold in squared pixels");
  bind_cmd->callback([&] { action = [&] { return cmd_bind(g, proposals, eps); }; });

  std::size_t count = 50;
  auto* gen_cmd = app.add_subcommand("gen", "Write random valid sequences into --out");
  gen_cmd->add_option("--count", count, "Number of sequences")->capture_default_str();
  gen_cmd->callback([&] { action = [&] { return cmd_gen(g, count); }; });

  std::string in_dir;
  auto* dedup_cmd = app.add_subcommand("dedup", "Drop invalid and duplicate sequences into --out");
  dedup_cmd->add_option("dir", in_dir)->required()->check(CLI::ExistingDirectory);
  dedup_cmd->callback([&] { action = [&] { return cmd_dedup(g, in_dir); }; });

  auto* dataset_cmd = app.add_subcommand("dataset", "Build renders, edge maps and proposals into --out");
  dataset_cmd->add_option("dir", in_dir)->required()->check(CLI::ExistingDirectory);
  dataset_cmd->callback([&] { action = [&] { return cmd_dataset(g, in_dir); }; });

  std::string pred_dir, gt_dir;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  eval_cmd->add_option("pred", pred_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("gt", gt_dir)->required()->check(CLI::ExistingDirectory);
  eval_cmd->callback([&] { action = [&] { return cmd_eval(g, pred_dir, gt_dir); }; });

  std::string logits_file, gt_file;
  std::optional<double> lambda;
  auto* loss_cmd = app.add_subcommand("loss", "Training loss of decoder logits against a ground truth");
  loss_cmd->add_option("logits", logits_file)->required()->check(CLI::ExistingFile);
  loss_cmd->add_option("gt", gt_file)->required()->check(CLI::ExistingFile);
  loss_cmd->add_option("--lambda", lambda, "Parameter-term weight");
  loss_cmd->callback([&] { action = [&] { return cmd_loss(g, logits_file, gt_file, lambda); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFatal;
  }
  try {
    return action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFatal;
  }
}
