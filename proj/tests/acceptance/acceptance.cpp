// End-to-end acceptance checks. One PASS/FAIL line per criterion; the exit
// code is the number of failures.

#include "benchmarks.hpp"
#include "coupler/config.hpp"
#include "coupler/contact.hpp"
#include "coupler/elasticity.hpp"
#include "coupler/implicit_surface.hpp"
#include "coupler/optimize.hpp"
#include "coupler/profile.hpp"
#include "coupler/skinning.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coupler;

namespace {

// Pinned tolerances.
constexpr double kGradientRelTol = 1e-5;
constexpr int kGradientStates = 120;
constexpr double kGradientSeconds = 10.0;
constexpr double kAxiomTol = 1e-10;
constexpr int kAxiomSamples = 1000;
constexpr int kSignProbes = 2000;
// Probes closer to the polygon than this fraction of the kernel width are not
// classified; the smooth field rounds the boundary within about 0.13 sigma.
constexpr double kSignMarginSigmas = 0.25;
constexpr double kPsiGradRelTol = 1e-6;
constexpr double kSimulationSeconds = 60.0;
constexpr double kRefinedEnergyRelDiff = 0.05;
constexpr int kCombIncrements = 40;
constexpr double kWorkEnergyRel = 0.05;
constexpr double kWorkEnergyAbs = 0.05;  // N
constexpr double kPartitionTol = 1e-6;
constexpr double kWeightUpperTol = 1e-9;
constexpr int kAnnealBudget = 300;
constexpr int kAnnealSeeds = 5;
constexpr int kAnnealRequired = 3;
constexpr int kDecouplingBudget = 150;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Mesh cube_tets() {
  Eigen::MatrixXd v(8, 3);
  v << 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 1, 0, 0, 0, 1, 1, 0, 1, 1, 1, 1, 0, 1, 1;
  Eigen::MatrixXi e(5, 4);
  e << 0, 1, 3, 4, 1, 2, 3, 6, 1, 4, 5, 6, 3, 4, 6, 7, 1, 3, 4, 6;
  return make_mesh(3, v, e);
}

// ---------------------------------------------------------------- 1
Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  const Material mat = bench::default_material();
  std::vector<std::shared_ptr<const Mesh>> meshes{std::make_shared<const Mesh>(bench::make_strip(2.0, 1.5, 4, 3)),
                                                  std::make_shared<const Mesh>(bench::make_strip(3.0, 1.0, 6, 2)),
                                                  std::make_shared<const Mesh>(cube_tets())};
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.05);
  double worst = 0.0;
  int states = 0;
  std::size_t max_vertices = 0;
  for (int s = 0; s < kGradientStates; ++s) {
    const auto& mesh = meshes[s % meshes.size()];
    max_vertices = std::max<std::size_t>(max_vertices, mesh->vertex_count());
    DeformedState state(mesh, mat);
    Eigen::MatrixXd x = mesh->vertices();
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += noise(rng);
    state.set_positions(x);
    if (min_det_deformation_gradient(state).first <= 0.1) {
      --s;
      continue;
    }
    const Eigen::VectorXd g = energy_gradient(state);
    Eigen::VectorXd q = state.dofs(), fd(q.size());
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < q.size(); ++i) {
      Eigen::VectorXd qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      DeformedState a = state, b = state;
      a.set_dofs(qp);
      b.set_dofs(qm);
      fd[i] = (total_energy(a) - total_energy(b)) / (2.0 * h);
    }
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-12));
    ++states;
  }
  const double t = seconds_since(t0);
  return {worst < kGradientRelTol && states >= 100 && max_vertices <= 50 && t < kGradientSeconds,
          fmt("max rel err %.2e over %d states (2D and 3D, <= %zu vertices), %.2f s", worst, states, max_vertices, t)};
}

// ---------------------------------------------------------------- 2
Outcome energy_axioms() {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  double worst_rest = 0.0, worst_rot = 0.0, min_energy = 1e300;
  const Material mat = bench::default_material();
  for (const Mesh& m : {bench::make_strip(2.0, 1.0, 4, 2), cube_tets(), bench::make_dumbbell()}) {
    DeformedState s(std::make_shared<const Mesh>(m), mat);
    worst_rest = std::max(worst_rest, std::abs(total_energy(s)));
  }
  int count = 0;
  for (int dim : {2, 3}) {
    for (int k = 0; k < kAxiomSamples; ++k) {
      Eigen::MatrixXd F(dim, dim);
      do {
        for (Eigen::Index i = 0; i < F.size(); ++i) F.data()[i] = (i % (dim + 1) == 0 ? 1.0 : 0.0) + 0.4 * n(rng);
      } while (F.determinant() <= 0.05);
      Eigen::MatrixXd R;
      if (dim == 2) {
        R = Eigen::Rotation2Dd(angle(rng)).toRotationMatrix();
      } else {
        Eigen::Vector3d axis(n(rng), n(rng), n(rng));
        R = Eigen::AngleAxisd(angle(rng), axis.normalized()).toRotationMatrix();
      }
      const double e = element_energy(F, mat, 1.0);
      const double er = element_energy(R * F, mat, 1.0);
      min_energy = std::min(min_energy, e);
      worst_rot = std::max(worst_rot, std::abs(er - e) / std::max(1.0, std::abs(e)));
      ++count;
    }
  }
  return {worst_rest <= kAxiomTol && min_energy >= 0.0 && worst_rot <= kAxiomTol,
          fmt("|E(X,X)| <= %.1e, min E %.3e, rotation drift %.1e (rel) over %d F", worst_rest, min_energy, worst_rot, count)};
}

// ---------------------------------------------------------------- 3
bool inside_polygon(const Polyline& poly, const Eigen::Vector2d& x) {
  bool in = false;
  const auto n = poly.points.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const auto& a = poly.points[i];
    const auto& b = poly.points[j];
    if ((a.y() > x.y()) != (b.y() > x.y()) && x.x() < (b.x() - a.x()) * (x.y() - a.y()) / (b.y() - a.y()) + a.x()) in = !in;
  }
  return in;
}

double polygon_distance(const Polyline& poly, const Eigen::Vector2d& x) {
  double d = 1e300;
  for (std::size_t i = 0; i < poly.points.size(); ++i) {
    const Eigen::Vector2d a = poly.points[i], b = poly.points[(i + 1) % poly.points.size()];
    const double t = std::clamp((x - a).dot(b - a) / (b - a).squaredNorm(), 0.0, 1.0);
    d = std::min(d, (a + t * (b - a) - x).norm());
  }
  return d;
}

Outcome imls_correctness() {
  Polyline hex;
  for (int k = 0; k < 6; ++k) {
    const double a = std::numbers::pi / 3 * k + 0.2;
    hex.points.emplace_back(2.0 * std::cos(a), 2.0 * std::sin(a));
  }
  ImplicitSurface s = build_surface(hex, 0.1);
  const double margin = kSignMarginSigmas * s.sigma();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  int probes = 0, agree = 0, skipped = 0;
  double worst_grad = 0.0;
  while (probes < kSignProbes) {
    const Eigen::Vector2d x(u(rng), u(rng));
    if (polygon_distance(hex, x) < margin) {
      ++skipped;
      continue;
    }
    ++probes;
    agree += (s.psi(x) > 0.0) == inside_polygon(hex, x);
    if (probes % 4 == 0) {
      const double h = 1e-6;
      const Eigen::Vector2d g = s.psi_gradient(x);
      const Eigen::Vector2d fd((s.psi(x + Eigen::Vector2d(h, 0)) - s.psi(x - Eigen::Vector2d(h, 0))) / (2 * h),
                               (s.psi(x + Eigen::Vector2d(0, h)) - s.psi(x - Eigen::Vector2d(0, h))) / (2 * h));
      worst_grad = std::max(worst_grad, (g - fd).norm() / std::max(fd.norm(), 1e-3));
    }
  }
  return {agree == probes && worst_grad < kPsiGradRelTol,
          fmt("sign %d/%d probes (%d within %.2f mm of the boundary skipped), grad rel err %.1e", agree, probes, skipped,
              margin, worst_grad)};
}

// ---------------------------------------------------------------- 4
Outcome contact_feasibility() {
  const InsertionProblem p = bench::gripper_problem(bench::GripperCategory::kTight);
  const auto t0 = std::chrono::steady_clock::now();
  const DeformationProfile prof = run_insertion(p);
  const double t = seconds_since(t0);
  double worst = -1e300;
  for (const auto& s : prof.steps) worst = std::max(worst, s.max_psi);
  return {!prof.truncated && static_cast<int>(prof.steps.size()) == p.path.step_count() &&
              worst <= p.settings.constraint_tol && t <= kSimulationSeconds,
          fmt("%d elements, %zu steps, max psi %.2e mm (tol %.0e), %.2f s", p.mesh->element_count(), prof.steps.size(), worst,
              p.settings.constraint_tol, t)};
}

// ---------------------------------------------------------------- 5
Outcome profile_categories() {
  using bench::GripperCategory;
  const double solver_tol = SolverSettings{}.kkt_tol;
  const auto tight = analyze_profile(run_insertion(bench::gripper_problem(GripperCategory::kTight)), 95.0);
  const DeformationProfile push = run_insertion(bench::gripper_problem(GripperCategory::kPushOut));
  const auto pushd = analyze_profile(push, 95.0);
  const auto e = push.energies();
  bool monotone = true;
  for (std::size_t k = 1; k < e.size(); ++k) monotone = monotone && e[k] >= e[k - 1] - 1e-9 * pushd.e_max;
  const auto loose = analyze_profile(run_insertion(bench::gripper_problem(GripperCategory::kLoose)), 1e-3);
  const double fg_tight = tight.grip ? tight.grip->magnitude : 0.0;
  const double fg_loose = loose.grip ? loose.grip->magnitude : 0.0;
  const bool a = tight.e_ss > 0.0 && tight.e_cr < 0.0 && fg_tight > 0.0;
  const bool b = monotone && pushd.e_cr > 0.0;
  const bool c = loose.e_ss <= 1e-12 && fg_loose <= solver_tol && loose.e_max > 0.0;
  return {a && b && c,
          fmt("tight E_ss %.3g E_CR %.1f F_g %.3g [%s]; push-out monotone %s E_CR %.1f [%s]; loose E_ss %.1e F_g %.1e [%s]",
              tight.e_ss, tight.e_cr, fg_tight, a ? "ok" : "bad", monotone ? "yes" : "no", pushd.e_cr, b ? "ok" : "bad",
              loose.e_ss, fg_loose, c ? "ok" : "bad")};
}

// ---------------------------------------------------------------- 6
double second_difference_rms(const std::vector<double>& f) {
  double sq = 0.0;
  for (std::size_t k = 1; k + 1 < f.size(); ++k) {
    const double d = f[k + 1] - 2.0 * f[k] + f[k - 1];
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(f.size() - 2));
}

double relative_l2(const std::vector<double>& a, const std::vector<double>& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    num += (a[k] - ref[k]) * (a[k] - ref[k]);
    den += ref[k] * ref[k];
  }
  return std::sqrt(num / den);
}

Outcome refinement_effect() {
  const Mesh coarse = bench::make_comb_mesh(1.0, 1.0);
  const DeformationProfile plain = run_insertion(bench::comb_problem(coarse, false, kCombIncrements));
  const DeformationProfile refined = run_insertion(bench::comb_problem(coarse, true, kCombIncrements));
  const DeformationProfile fine = run_insertion(bench::comb_problem(bench::subdivide(coarse), true, kCombIncrements));
  if (plain.truncated || refined.truncated || fine.truncated) return {false, "a comb simulation failed"};
  const double r_plain = second_difference_rms(plain.forces());
  const double r_ref = second_difference_rms(refined.forces());
  const double d_ref = relative_l2(refined.energies(), fine.energies());
  const double d_plain = relative_l2(plain.energies(), fine.energies());
  return {r_ref < r_plain && d_ref < kRefinedEnergyRelDiff,
          fmt("force roughness %.3e refined vs %.3e plain; energy vs subdivided mesh %.1f%% refined (%.1f%% plain)", r_ref,
              r_plain, 100.0 * d_ref, 100.0 * d_plain)};
}

// ---------------------------------------------------------------- 7
std::set<int> contact_vertices(const ProfileStep& s) {
  std::set<int> out;
  for (Eigen::Index v = 0; v < s.contact_forces.rows(); ++v) {
    if (s.contact_forces.row(v).norm() > 0.0) out.insert(static_cast<int>(v));
  }
  return out;
}

Outcome work_energy() {
  const InsertionProblem p = bench::gripper_problem(bench::GripperCategory::kTight);
  const DeformationProfile prof = run_insertion(p);
  if (prof.truncated) return {false, "simulation failed"};
  const double h = p.path.step_length;
  int checked = 0, failed = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < prof.steps.size(); ++k) {
    const auto& a = prof.steps[k];
    const auto& b = prof.steps[k + 1];
    // Smooth contact: in contact at both ends, so onset and release are excluded.
    if (contact_vertices(a).empty() || contact_vertices(b).empty()) continue;
    const double lhs = -(b.energy - a.energy) / h;
    const double mid = 0.5 * (a.force + b.force);
    const double err = std::abs(lhs - mid);
    const double allowed = std::max(kWorkEnergyRel * std::abs(mid), kWorkEnergyAbs);
    worst = std::max(worst, err / allowed);
    ++checked;
    failed += err > allowed;
  }
  return {checked > 0 && failed == 0,
          fmt("%d smooth-contact steps, worst |-dE/ds - f_mid| at %.0f%% of its allowance", checked, 100.0 * worst)};
}

// ---------------------------------------------------------------- 8
Outcome bbw_invariants(const fs::path& data) {
  std::vector<std::pair<std::string, Mesh>> corpus{{"strip", bench::make_strip(4.0, 1.0, 8, 2)},
                                                   {"dumbbell", bench::make_dumbbell()},
                                                   {"comb", bench::make_comb_mesh(1.0, 1.0)}};
  for (const char* name : {"gripper_tight.off", "gripper_pushout.off", "gripper_loose.off"}) {
    corpus.emplace_back(name, load_mesh(data / name));
  }
  std::mt19937_64 rng(8);
  double worst_sum = 0.0, worst_interp = 0.0, lo = 1e300, hi = -1e300;
  int sets = 0;
  for (const auto& [name, m] : corpus) {
    for (int k : {1, 3, 6}) {
      std::vector<Handle> handles = place_handles_spatial(m, k, rng()).handles;
      if (k > 1) handles.back().active = false;
      const Eigen::MatrixXd w = compute_bbw(m, handles);
      worst_sum = std::max(worst_sum, (w.rowwise().sum().array() - 1.0).abs().maxCoeff());
      lo = std::min(lo, w.minCoeff());
      hi = std::max(hi, w.maxCoeff());
      for (std::size_t j = 0; j < handles.size(); ++j) {
        for (std::size_t i = 0; i < handles.size(); ++i) {
          worst_interp = std::max(worst_interp, std::abs(w(handles[i].vertex, j) - (i == j ? 1.0 : 0.0)));
        }
      }
      ++sets;
    }
  }
  return {worst_sum <= kPartitionTol && lo >= 0.0 && hi <= 1.0 + kWeightUpperTol && worst_interp <= kPartitionTol,
          fmt("%d handle sets on %zu meshes: |sum - 1| %.1e, range [%.2g, %.17g], interpolation err %.1e", sets,
              corpus.size(), worst_sum, lo, hi, worst_interp)};
}

// ---------------------------------------------------------------- 9, 10
OptimizationProblem pushout_design(const TargetSpec& target) {
  InsertionProblem p = bench::gripper_problem(bench::GripperCategory::kPushOut);
  const DeformationProfile base = run_insertion(p);
  if (base.truncated) throw Error("push-out baseline failed");
  const Placement pl = place_handles_displacement(*p.mesh, base.max_displacement(), p.fixed);
  DesignSpace design(p.mesh, make_handle_set(*p.mesh, pl.handles));
  return OptimizationProblem(std::move(p), std::move(design), target);
}

Outcome optimization_efficacy() {
  TargetSpec target;
  target.grip = ForceBounds{0.5, 20.0};
  const OptimizationProblem problem = pushout_design(target);
  std::vector<std::future<OptimizationResult>> runs;
  for (int seed = 0; seed < kAnnealSeeds; ++seed) {
    AnnealSettings s;
    s.max_iterations = kAnnealBudget;
    s.seed = static_cast<std::uint64_t>(seed);
    runs.push_back(std::async(std::launch::async, [&problem, s] { return optimize_rest_shape(problem, s); }));
  }
  int feasible = 0;
  bool monotone = true, start_infeasible = true;
  std::string per_seed;
  for (int seed = 0; seed < kAnnealSeeds; ++seed) {
    const OptimizationResult r = runs[seed].get();
    start_infeasible = start_infeasible && !r.before.feasible;
    const auto& trail = r.anneal.trail;
    for (std::size_t i = 1; i < trail.size(); ++i) monotone = monotone && trail[i].best <= trail[i - 1].best;
    const bool ok = !r.after.failed && r.after.penalty == 0.0 && r.after.feasible;
    feasible += ok;
    per_seed += fmt(" seed %d: %s E=%.3g F_g=%.2f;", seed, ok ? "feasible" : "infeasible", r.after.objective,
                    r.after.descriptors && r.after.descriptors->grip ? r.after.descriptors->grip->magnitude : 0.0);
  }
  return {start_infeasible && feasible >= kAnnealRequired && monotone,
          fmt("%d/%d seeds reach penalty 0 in %d iterations, best-so-far monotone: %s;", feasible, kAnnealSeeds,
              kAnnealBudget, monotone ? "yes" : "no") +
              per_seed};
}

Outcome decoupling(const fs::path& out_dir) {
  struct Variant {
    const char* name;
    ForceBounds grip, insertion;
  };
  // Opposite requests: a firm grip that slides in easily, and a light grip
  // that is hard to push in.
  const Variant variants[2] = {{"firm_grip_easy_insertion", {1.2, 20.0}, {0.0, 0.9}},
                               {"light_grip_hard_insertion", {0.0, 1.0}, {1.2, 20.0}}};
  double fg[2], fin[2];
  json doc = json::array();
  for (int i = 0; i < 2; ++i) {
    TargetSpec target;
    target.grip = variants[i].grip;
    target.insertion = variants[i].insertion;
    const OptimizationProblem problem = pushout_design(target);
    AnnealSettings s;
    s.max_iterations = kDecouplingBudget;
    const OptimizationResult r = optimize_rest_shape(problem, s);
    if (r.after.failed || !r.after.descriptors) return {false, std::string(variants[i].name) + ": optimized design failed"};
    fg[i] = r.after.descriptors->grip ? r.after.descriptors->grip->magnitude : 0.0;
    fin[i] = r.after.descriptors->f_in;
    doc.push_back({{"variant", variants[i].name},
                   {"grip_bounds", {variants[i].grip.lower, variants[i].grip.upper}},
                   {"insertion_bounds", {variants[i].insertion.lower, variants[i].insertion.upper}},
                   {"seed", s.seed},
                   {"iterations", s.max_iterations},
                   {"result", to_json(r.after)}});
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::ofstream off(out_dir / (std::string(variants[i].name) + ".off"));
      write_off(off, *problem.insertion.mesh, r.rest);
      std::ofstream csv(out_dir / (std::string(variants[i].name) + "_profile.csv"));
      write_profile_csv(csv, r.after.profile);
    }
  }
  const bool differ = (fg[0] - fg[1]) * (fin[0] - fin[1]) < 0.0;
  if (!out_dir.empty()) {
    std::ofstream(out_dir / "decoupling.json") << json{{"variants", doc}, {"orderings_differ", differ}}.dump(2) << '\n';
  }
  return {differ, fmt("A: F_g %.2f N, F_in %.2f N; B: F_g %.2f N, F_in %.2f N; grip order %s, insertion order %s", fg[0],
                      fin[0], fg[1], fin[1], fg[0] > fg[1] ? "A > B" : "A < B", fin[0] > fin[1] ? "A > B" : "A < B")};
}

// ---------------------------------------------------------------- 11
int run_cli(const std::string& args) {
  const std::string cmd = std::string(COUPLER_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every produced file except the config echo and manifest (which name the
// output directory) must match byte for byte.
bool same_outputs(const fs::path& a, const fs::path& b, int& compared) {
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    if (rel == "config.json" || rel == "manifest.json") continue;
    if (!fs::exists(b / rel) || slurp(entry.path()) != slurp(b / rel)) return false;
    ++compared;
  }
  return compared > 0;
}

Outcome determinism(const fs::path& data) {
  const fs::path tmp = fs::temp_directory_path() / ("coupler_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  int files = 0;
  bool ok = true;
  for (const char* run : {"a", "b"}) {
    ok = ok && run_cli("simulate " + (data / "gripper_tight.json").string() + " -o " + (tmp / "sim" / run).string()) == 0;
    ok = ok && run_cli("optimize " + (data / "optimize_pushout.json").string() + " --iterations 5 -o " +
                       (tmp / "opt" / run).string()) == 0;
  }
  if (!ok) return {false, "a CLI run failed"};
  const bool sim = same_outputs(tmp / "sim" / "a", tmp / "sim" / "b", files);
  const bool opt = same_outputs(tmp / "opt" / "a", tmp / "opt" / "b", files);
  fs::remove_all(tmp);
  return {sim && opt, fmt("simulate %s, optimize %s (%d files compared)", sim ? "identical" : "DIFFERENT",
                          opt ? "identical" : "DIFFERENT", files)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string data = COUPLER_DATA_DIR;
  std::string out;
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--data", data, "Demo data directory");
  app.add_option("--out", out, "Directory for the decoupling demo output");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient fidelity", gradient_fidelity},
      {"energy axioms", energy_axioms},
      {"IMLS correctness", imls_correctness},
      {"contact feasibility", contact_feasibility},
      {"profile categories", profile_categories},
      {"refinement effect", refinement_effect},
      {"work-energy consistency", work_energy},
      {"BBW invariants", [&] { return bbw_invariants(data); }},
      {"optimization efficacy", optimization_efficacy},
      {"decoupling", [&] { return decoupling(out); }},
      {"determinism", [&] { return determinism(data); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures;
}
