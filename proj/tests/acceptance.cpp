// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "skex/generate.hpp"
#include "skex/pipeline.hpp"
#include "support.hpp"

using namespace skex;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Accumulates failed checks with a short reason.
struct Verdict {
  std::vector<std::string> failures;
  std::string note;
  void check(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SKEX_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// 1. parse/serialize identity and the half-bin quantization bound.
void round_trip(Verdict& v) {
  const auto t0 = Clock::now();
  SequenceGenerator snapped(1), free(2, GeneratorOptions{.snap_to_grid = false});
  std::size_t n = 0;
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const CadSequence a = snapped();
    v.check(parse_json(serialize_json(a)) == a, "json round trip");
    v.check(dequantize(quantize(a)) == a, "snapped token round trip");
    const CadSequence b = free();
    v.check(parse_json(serialize_json(b)) == b, "json round trip (unsnapped)");
    const CadSequence d = dequantize(quantize(b));
    v.check(d.commands.size() == b.commands.size(), "dequantized length");
    for (std::size_t c = 0; c < std::min(d.commands.size(), b.commands.size()); ++c)
      for (std::size_t s = 0; s < kSlotCount; ++s) {
        if (!uses_slot(b.commands[c].type, s)) continue;
        const double err = std::abs(d.commands[c].params[s] - b.commands[c].params[s]);
        if (is_discrete(s))
          v.check(err == 0, "discrete slot changed");
        else
          worst = std::max(worst, err);
      }
    n += 2;
  }
  const double secs = seconds_since(t0);
  v.check(worst <= 1.0 / 510 + 1e-12, "half-bin bound exceeded: " + fmt(worst));
  v.check(secs < 5, "took " + fmt(secs) + " s");
  v.note = std::to_string(n) + " sequences, max error " + fmt(worst) + ", " + fmt(secs) + " s";
}

// 2. Monte Carlo volumes at 10^6 samples.
void geometry(Verdict& v) {
  const auto t0 = Clock::now();
  const std::size_t n = 1000000;
  struct Case {
    const char* name;
    SolidModel model;
    Vec3 lo, hi;
    double expect;
  };
  const std::vector<Case> cases = {
      {"cylinder", execute(test::cylinder()), {0, 0, 0}, {1, 1, 1}, kPi * 0.25 * 0.25 * 0.8},
      {"box", execute(test::box({0.1, 0.2, 0.3}, 0.5, 0.4)), {0, 0, 0}, {1, 1, 1}, 0.5 * 0.5 * 0.4},
      {"box-minus-box",
       execute(test::with_box(test::box(), {0.25, 0.25, 0.25}, 0.5, 0.5, BooleanOp::Cut)),
       {-0.1, -0.1, -0.1},
       {1.1, 1.1, 1.1},
       1.0 - 0.125},
      {"box-intersect-box",
       execute(test::with_box(test::box(), {0.5, 0.5, 0.5}, 1, 1, BooleanOp::Intersect)),
       {0, 0, 0},
       {1.6, 1.6, 1.6},
       0.125},
  };
  std::string detail;
  std::uint64_t seed = 1;
  for (const auto& c : cases) {
    const double vol = test::mc_volume(c.model, c.lo, c.hi, n, seed++);
    const double rel = std::abs(vol - c.expect) / c.expect;
    v.check(rel <= 0.02, std::string(c.name) + " off by " + fmt(rel));
    detail += std::string(c.name) + " " + fmt(rel * 100) + "% ";
  }
  const double secs = seconds_since(t0);
  v.check(secs < 30, "took " + fmt(secs) + " s");
  v.note = detail + "| " + fmt(secs) + " s";
}

double brute_chamfer(const PointCloud& a, const PointCloud& b) {
  auto one = [](const PointCloud& f, const PointCloud& t) {
    double s = 0;
    for (const Vec3& p : f.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : t.points) best = std::min(best, norm2(p - q));
      s += best;
    }
    return s / static_cast<double>(f.size());
  };
  return one(a, b) + one(b, a);
}

// 3. Chamfer distance.
void chamfer_checks(Verdict& v) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_int_distribution<std::size_t> size(1, 200);
  auto cloud = [&](std::size_t n) {
    PointCloud c;
    for (std::size_t i = 0; i < n; ++i) c.points.push_back({u(rng), u(rng), u(rng)});
    return c;
  };
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    const PointCloud a = cloud(size(rng)), b = cloud(size(rng));
    const double cd = chamfer(a, b);
    worst = std::max(worst, std::abs(cd - brute_chamfer(a, b)));
    v.check(cd == chamfer(b, a), "asymmetric");
    v.check(chamfer(a, a) == 0.0, "CD(a,a) != 0");
  }
  v.check(worst <= 1e-12, "index vs brute force " + fmt(worst));
  const SolidModel m = normalize_model(execute(test::plate_with_hole()));
  const PointCloud a = normalize_points(sample_surface(m, 2000, 1)), b = normalize_points(sample_surface(m, 2000, 2));
  const auto t0 = Clock::now();
  const double cd = chamfer(a, b);
  const double secs = seconds_since(t0);
  v.check(secs < 1, "2000-point pair took " + fmt(secs) + " s");
  v.note = "max |index - brute| " + fmt(worst) + ", 2000-point pair " + fmt(secs) + " s (CD " + fmt(cd) + ")";
}

// 4. eval gt gt on a 50-model dataset (built by criterion 8).
void self_eval(Verdict& v, const fs::path& work) {
  const fs::path ds = work / "run_a";
  if (!fs::exists(ds / "manifest.json")) {
    v.check(false, "dataset missing");
    return;
  }
  const fs::path report = work / "self_eval.json";
  const int code = run_cli("eval " + ds.string() + " " + ds.string() + " --out " + report.string(), work / "eval.log");
  v.check(code == 0, "exit code " + std::to_string(code));
  if (code != 0) return;
  const auto r = nlohmann::json::parse(slurp(report));
  v.check(r["counts"]["sequences"] == 50, "sequence count " + r["counts"]["sequences"].dump());
  v.check(r["cmd_acc"] == 1.0, "cmd_acc " + r["cmd_acc"].dump());
  v.check(r["param_acc"] == 1.0, "param_acc " + r["param_acc"].dump());
  v.check(r["invalid_ratio"] == 0.0, "invalid_ratio " + r["invalid_ratio"].dump());
  v.check(r["cd"].is_number() && r["cd"].get<double>() < 1e-6, "cd " + r["cd"].dump());
  v.note = "cmd_acc " + r["cmd_acc"].dump() + ", param_acc " + r["param_acc"].dump() + ", invalid " +
           r["invalid_ratio"].dump() + ", cd " + r["cd"].dump();
}

// 5. Binding.
void binding(Verdict& v) {
  {
    const std::vector<LineProposal> l{{{10, 10}, {50, 10}}};
    const std::vector<EndpointProposal> e{{{11, 10}, 1}, {{50, 13}, 1}};
    const Wireframe w = skex::bind(l, e, 25);
    v.check(w.lines.size() == 1 && w.lines[0].delta1 == 1 && w.lines[0].delta2 == 9 && w.lines[0].delta == 9 &&
                w.lines[0].y1 == Vec2{11, 10} && w.lines[0].y2 == Vec2{50, 13},
            "worked example");
    v.check(skex::bind(l, e, 9).lines.empty(), "strict threshold");
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 200), ue(0, 80);
  for (int scene = 0; scene < 100; ++scene) {
    std::vector<EndpointProposal> e;
    std::vector<LineProposal> l;
    for (int i = 0; i < 15; ++i) e.push_back({{u(rng), u(rng)}, 1});
    std::normal_distribution<double> n(0, 4);
    for (int i = 0; i < 40; ++i) {
      const Vec2 a = e[static_cast<std::size_t>(i) % e.size()].position + Vec2{n(rng), n(rng)};
      l.push_back({a, {u(rng), u(rng)}});
    }
    double a = ue(rng), b = ue(rng);
    if (a > b) std::swap(a, b);
    std::set<std::size_t> small, large;
    for (const auto& x : skex::bind(l, e, a).lines) small.insert(x.source);
    for (const auto& x : skex::bind(l, e, b).lines) large.insert(x.source);
    v.check(std::includes(large.begin(), large.end(), small.begin(), small.end()), "monotonicity");
  }
  SequenceGenerator gen(55);
  const auto cams = camera_ring(36, 2.0, default_elevations());
  std::size_t edges = 0;
  for (int k = 0; k < 10; ++k) {
    const SolidModel m = normalize_model(execute(gen()));
    for (std::size_t c = 0; c < cams.size(); c += 7) {
      const OracleProposals p = oracle_proposals(m, cams[c], {});
      std::set<std::array<double, 4>> truth;
      for (const auto& t : p.truth) truth.insert({t.x1.x, t.x1.y, t.x2.x, t.x2.y});
      for (double eps : {1e-12, 1.0, 4.0, 1e6}) {
        const Wireframe w = skex::bind(p.lines, p.endpoints, eps);
        std::set<std::array<double, 4>> got;
        std::size_t tp = 0;
        for (const auto& x : w.lines) {
          const std::array<double, 4> key{x.y1.x, x.y1.y, x.y2.x, x.y2.y};
          tp += truth.count(key);
          got.insert(key);
        }
        v.check(tp == w.lines.size(), "precision < 1 at eps " + fmt(eps));
        v.check(got == truth, "recall < 1 at eps " + fmt(eps));
      }
      edges += p.truth.size();
    }
  }
  v.note = "100 scenes monotone; worked example exact; " + std::to_string(edges) + " noiseless edges recovered";
}

// 6. Edge pipeline on a rendered black square.
void edges(Verdict& v) {
  TriangleMesh mesh;
  const double h = 0.3;
  mesh.vertices = {{-h, -h, 0}, {h, -h, 0}, {h, h, 0}, {-h, h, 0}};
  mesh.triangles = {{0, 2, 1}, {0, 3, 2}};  // faces away from the camera: black
  Camera cam;
  cam.eye = {0, 0, 2};
  cam.up = {0, 1, 0};
  const Projector proj(cam);
  const Vec2 lo = proj({-h, h, 0})->pixel, hi = proj({h, -h, 0})->pixel;
  const GrayImage img = render(mesh, cam);
  const EdgeMap e = edge_map(img);
  const std::array<Vec2, 4> corner{lo, Vec2{hi.x, lo.y}, hi, Vec2{lo.x, hi.y}};
  auto dist = [&](Vec2 q) {
    double best = 1e300;
    for (int i = 0; i < 4; ++i) best = std::min(best, std::sqrt(detail::segment_distance2(q, corner[i], corner[(i + 1) % 4])));
    return best;
  };
  std::vector<Vec2> px;
  std::size_t near = 0;
  for (int y = 0; y < e.height; ++y)
    for (int x = 0; x < e.width; ++x)
      if (e.at(x, y)) {
        px.push_back({x + 0.5, y + 0.5});
        near += dist(px.back()) <= 1.0;
      }
  std::size_t covered = 0, total = 0;
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = corner[i], b = corner[(i + 1) % 4];
    const int n = static_cast<int>(std::ceil(norm(b - a)));
    for (int k = 0; k < n; ++k) {
      const Vec2 q = a + (b - a) * (static_cast<double>(k) / n);
      ++total;
      for (Vec2 p : px)
        if (norm(p - q) <= 1.0) {
          ++covered;
          break;
        }
    }
  }
  const double precision = px.empty() ? 0.0 : static_cast<double>(near) / px.size();
  const double coverage = static_cast<double>(covered) / total;
  v.check(precision >= 0.9, "near-boundary fraction " + fmt(precision));
  v.check(coverage >= 0.9, "coverage " + fmt(coverage));
  const std::size_t constant = edge_map(GrayImage(128, 128, 0.6f)).count();
  v.check(constant == 0, "constant image gave edges");
  v.note = std::to_string(px.size()) + " edge pixels, " + fmt(precision * 100) + "% within 1 px, " +
           fmt(coverage * 100) + "% coverage, constant image " + std::to_string(constant) + " edges";
}

// 7. Loss.
void loss_checks(Verdict& v) {
  v.check(kDefaultLossWeight == 2.0, "default weight");
  v.check(std::abs(loss(Logits{}, TokenMatrix{}) - std::log(6.0)) <= 1e-6, "single row");
  const TokenMatrix g = quantize(test::plate_with_hole());
  std::size_t rows = g.length(), slots = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t s = 0; s < kSlotCount; ++s) slots += uses_slot(g.rows[r].command_type(), s);
  const double uniform = static_cast<double>(rows) * std::log(6.0) + 2.0 * static_cast<double>(slots) * std::log(256.0);
  v.check(std::abs(loss(Logits{}, g) - uniform) <= 1e-6 * rows, "uniform logits");

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 1);
  Logits l;
  for (double& x : l.command) x = n(rng);
  for (double& x : l.param) x = n(rng);
  const LossResult res = loss_with_gradient(l, g);
  double worst = 0;
  const double h = 1e-5;
  auto probe = [&](double& slot, double analytic) {
    const double keep = slot;
    slot = keep + h;
    const double up = loss(l, g);
    slot = keep - h;
    const double down = loss(l, g);
    slot = keep;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - analytic) / std::max(std::abs(analytic), 1e-4));
  };
  std::uniform_int_distribution<std::size_t> level(0, 255);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < kTypeCount; ++k) probe(l.cmd(r, k), res.gradient.cmd(r, k));
    for (std::size_t s = 0; s < kSlotCount; ++s) {
      if (!uses_slot(g.rows[r].command_type(), s)) continue;
      const auto t = static_cast<std::size_t>(g.rows[r].params[s]);
      probe(l.prm(r, s, t), res.gradient.prm(r, s, t));
      const std::size_t k = level(rng);
      probe(l.prm(r, s, k), res.gradient.prm(r, s, k));
    }
  }
  v.check(worst <= 1e-4, "gradient relative error " + fmt(worst));
  const double base = loss(l, g);
  Logits masked = l;
  for (std::size_t k = 0; k < kQuantLevels; ++k) masked.prm(1, 4, k) += 3.0;  // Line row, r slot unused
  for (std::size_t k = 0; k < kTypeCount; ++k) masked.cmd(rows + 2, k) = 50.0 * static_cast<double>(k);
  v.check(loss(masked, g) == base, "masked perturbation changed loss");
  v.note = "uniform " + fmt(uniform) + ", max gradient rel error " + fmt(worst) + ", lambda 2";
}

// 8. Dataset smoke run and byte-identical rerun. Also builds the input for 4.
void dataset_smoke(Verdict& v, const fs::path& work) {
  const fs::path seqs = work / "sequences";
  int code = run_cli("gen --count 50 --seed 2024 --out " + seqs.string(), work / "gen.log");
  v.check(code == 0, "gen exit " + std::to_string(code));
  std::vector<double> times;
  for (const char* name : {"run_a", "run_b"}) {
    const auto t0 = Clock::now();
    code = run_cli("dataset " + seqs.string() + " --seed 2024 --views 36 --out " + (work / name).string(),
                   work / (std::string(name) + ".log"));
    times.push_back(seconds_since(t0));
    v.check(code == 0, std::string(name) + " exit " + std::to_string(code));
    v.check(times.back() < 600, std::string(name) + " took " + fmt(times.back()) + " s");
  }
  if (!v.failures.empty()) return;
  const std::string ma = slurp(work / "run_a" / "manifest.json");
  v.check(ma == slurp(work / "run_b" / "manifest.json"), "manifests differ");
  const auto doc = nlohmann::json::parse(ma);
  const auto& counts = doc["counts"];
  v.check(counts["models"] == 50, "models " + counts["models"].dump());
  v.check(counts["skipped"] == 0, "skipped " + counts["skipped"].dump());
  v.check(counts["views_per_model"] == 36, "views " + counts["views_per_model"].dump());
  std::size_t files = 0, renders = 0;
  for (const auto& [path, digest] : doc["files"].items()) {
    ++files;
    renders += path.find(".render.png") != std::string::npos;
    v.check(slurp(work / "run_a" / path) == slurp(work / "run_b" / path), "differs: " + path);
  }
  v.check(renders == 50 * 36, "render count " + std::to_string(renders));
  v.check(verify_manifest(work / "run_a").empty(), "manifest digests do not verify");
  v.note = "50 models x 36 views, " + std::to_string(files) + " files identical across reruns, runs took " +
           fmt(times[0]) + " s and " + fmt(times[1]) + " s";
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "skex_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    std::function<void(Verdict&)> fn;
  };
  // Criterion 8 produces the dataset that 4 evaluates, so it runs first;
  // lines are still printed in order.
  std::vector<Criterion> order = {
      {8, "dataset smoke run", [&](Verdict& v) { dataset_smoke(v, work); }},
      {1, "round trip", round_trip},
      {2, "geometry oracle", geometry},
      {3, "chamfer", chamfer_checks},
      {4, "self evaluation", [&](Verdict& v) { self_eval(v, work); }},
      {5, "binding", binding},
      {6, "edge pipeline", edges},
      {7, "loss", loss_checks},
  };
  std::map<int, std::string> lines;
  bool all = true;
  for (auto& c : order) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      c.fn(v);
    } catch (const std::exception& e) {
      v.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = v.failures.empty();
    all = all && ok;
    std::string line = std::string(ok ? "PASS" : "FAIL") + " " + std::to_string(c.id) + " " + c.name + " (" +
                       fmt(seconds_since(t0)) + " s): ";
    if (ok) {
      line += v.note;
    } else {
      for (std::size_t i = 0; i < v.failures.size() && i < 5; ++i) line += (i ? "; " : "") + v.failures[i];
    }
    lines[c.id] = line;
  }
  for (const auto& [_, line] : lines) std::cout << line << '\n';
  return all ? 0 : 1;
}
