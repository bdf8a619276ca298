#include "coupler/config.hpp"

#include "coupler/error.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

namespace coupler {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Object view that rejects keys outside `allowed` and reports bad types by
// their dotted path.
class Section {
 public:
  Section(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError(where() + "expected a JSON object");
    std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
      if (!keys.count(key)) throw ConfigError("unknown config key \"" + (path_.empty() ? key : path_ + "." + key) + "\"");
    }
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  const json& raw(const char* key) const { return j_.at(key); }
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  std::optional<T> get(const char* key) const {
    if (!has(key)) return std::nullopt;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key \"" + child(key) + "\" has the wrong type");
    }
  }

  template <class T>
  void read(const char* key, T& out) const {
    if (auto v = get<T>(key)) out = *v;
  }

  Eigen::Vector2d vec2(const char* key, const Eigen::Vector2d& fallback) const {
    if (!has(key)) return fallback;
    const auto v = get<std::vector<double>>(key);
    if (v->size() != 2) throw ConfigError("config key \"" + child(key) + "\" must hold two numbers");
    return {(*v)[0], (*v)[1]};
  }

  std::optional<ForceBounds> bounds(const char* key) const {
    if (!has(key)) return std::nullopt;
    const auto v = get<std::vector<double>>(key);
    if (v->size() != 2) throw ConfigError("config key \"" + child(key) + "\" must be [lower, upper]");
    return ForceBounds{(*v)[0], (*v)[1]};
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : "config key \"" + path_ + "\": "; }

  const json& j_;
  std::string path_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::absolute(base / path).lexically_normal();
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json bounds_json(const std::optional<ForceBounds>& b) { return b ? json::array({b->lower, b->upper}) : json(nullptr); }

}  // namespace

int path_increments(double length, double h_in) {
  if (!(length > 0.0) || !(h_in > 0.0)) throw ConfigError("path: length and h_in must be > 0");
  return std::max(1, static_cast<int>(std::ceil(length / h_in - 1e-9)));
}

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  Section top(j, "", {"mesh", "object", "material", "surface", "path", "boundary", "solver", "target", "anneal",
                      "handles", "output", "seed", "write_meshes"});
  RunConfig c;
  const auto mesh = top.get<std::string>("mesh");
  const auto object = top.get<std::string>("object");
  if (!mesh) throw ConfigError("config key \"mesh\" is required");
  if (!object) throw ConfigError("config key \"object\" is required");
  c.mesh = resolve(base_dir, *mesh);
  c.object = resolve(base_dir, *object);

  if (!top.has("material")) throw ConfigError("config key \"material\" is required");
  {
    Section m(top.raw("material"), "material",
              {"youngs_modulus", "poisson_ratio", "mu", "lambda", "sigma_yield", "thickness_mm"});
    const auto sigma = m.get<double>("sigma_yield");
    if (!sigma) throw ConfigError("config key \"material.sigma_yield\" is required");
    const bool young = m.has("youngs_modulus") || m.has("poisson_ratio");
    const bool lame = m.has("mu") || m.has("lambda");
    if (young == lame) throw ConfigError("material: give either youngs_modulus/poisson_ratio or mu/lambda");
    if (young) {
      const auto e = m.get<double>("youngs_modulus");
      const auto nu = m.get<double>("poisson_ratio");
      if (!e || !nu) throw ConfigError("material: youngs_modulus and poisson_ratio go together");
      if (!(*nu > -1.0 && *nu < 0.5)) throw ConfigError("material: poisson_ratio must be in (-1, 0.5)");
      c.material = Material::from_young(*e, *nu, *sigma);
    } else {
      const auto mu = m.get<double>("mu");
      const auto lambda = m.get<double>("lambda");
      if (!mu || !lambda) throw ConfigError("material: mu and lambda go together");
      c.material = {*mu, *lambda, *sigma};
    }
    m.read("thickness_mm", c.thickness);
  }

  if (top.has("surface")) {
    Section s(top.raw("surface"), "surface", {"spacing", "sigma"});
    s.read("spacing", c.surface_spacing);
    c.surface_sigma = s.get<double>("sigma");
  }

  if (top.has("path")) {
    Section p(top.raw("path"), "path", {"start", "start_rotation", "direction", "length", "h_in", "rotation"});
    c.start = p.vec2("start", c.start);
    p.read("start_rotation", c.start_rotation);
    c.direction = p.vec2("direction", c.direction);
    if (p.has("length")) {
      if (p.raw("length").is_string()) {
        if (p.raw("length").get<std::string>() != "auto") throw ConfigError("path.length must be a number or \"auto\"");
      } else {
        c.length = p.get<double>("length");
      }
    }
    c.h_in = p.get<double>("h_in");
    p.read("rotation", c.total_rotation);
  }

  if (top.has("boundary")) {
    Section b(top.raw("boundary"), "boundary", {"fixed_vertices", "fixed_box", "mode"});
    b.read("fixed_vertices", c.fixed_vertices);
    if (b.has("fixed_box")) {
      Section box(b.raw("fixed_box"), "boundary.fixed_box", {"min", "max"});
      if (!box.has("min") || !box.has("max")) throw ConfigError("boundary.fixed_box needs min and max");
      c.fixed_box = Eigen::AlignedBox2d(box.vec2("min", {}), box.vec2("max", {}));
    }
    if (const auto mode = b.get<std::string>("mode")) {
      if (*mode == "insertion_axis") {
        c.fixed_mode = ConstraintMode::kInsertionAxis;
      } else if (*mode == "all_axes") {
        c.fixed_mode = ConstraintMode::kAllAxes;
      } else {
        throw ConfigError("boundary.mode must be \"insertion_axis\" or \"all_axes\"");
      }
    }
  }

  if (top.has("solver")) {
    Section s(top.raw("solver"), "solver",
              {"constraint_tol", "kkt_tol", "max_sqp_iters", "refinement_points", "contact_band",
               "max_refinement_rounds", "refine", "von_mises"});
    s.read("constraint_tol", c.solver.constraint_tol);
    s.read("kkt_tol", c.solver.kkt_tol);
    s.read("max_sqp_iters", c.solver.max_sqp_iters);
    s.read("refinement_points", c.solver.refinement_points);
    c.solver.contact_band = s.get<double>("contact_band");
    s.read("max_refinement_rounds", c.solver.max_refinement_rounds);
    s.read("refine", c.solver.refine);
    if (const auto vm = s.get<std::string>("von_mises")) {
      if (*vm == "plane_stress") {
        c.solver.von_mises = VonMisesModel::kPlaneStress;
      } else if (*vm == "plane_strain") {
        c.solver.von_mises = VonMisesModel::kPlaneStrain;
      } else {
        throw ConfigError("solver.von_mises must be \"plane_stress\" or \"plane_strain\"");
      }
    }
  }

  if (top.has("target")) {
    Section t(top.raw("target"), "target", {"mode", "grip", "insertion", "removal", "sigma_yield", "force_profile"});
    if (const auto mode = t.get<std::string>("mode")) {
      if (*mode == "tight") {
        c.target.mode = CouplingMode::kTight;
      } else if (*mode == "loose") {
        c.target.mode = CouplingMode::kLoose;
      } else {
        throw ConfigError("target.mode must be \"tight\" or \"loose\"");
      }
    }
    c.target.grip = t.bounds("grip");
    c.target.insertion = t.bounds("insertion");
    c.target.removal = t.bounds("removal");
    c.target.sigma_yield = t.get<double>("sigma_yield");
    if (t.has("force_profile")) {
      if (t.raw("force_profile").is_string()) {
        const fs::path csv = resolve(base_dir, t.raw("force_profile").get<std::string>());
        std::ifstream in(csv);
        if (!in) throw ConfigError("cannot open target force profile " + csv.string());
        for (const auto& row : read_profile_csv(in)) c.target.force_profile.push_back(row.force);
      } else {
        t.read("force_profile", c.target.force_profile);
      }
    }
  }

  if (top.has("anneal")) {
    Section a(top.raw("anneal"), "anneal", {"max_iterations", "t0", "alpha", "sigma0", "sigma_decay", "penalty"});
    a.read("max_iterations", c.anneal.max_iterations);
    a.read("t0", c.anneal.t0);
    a.read("alpha", c.anneal.alpha);
    a.read("sigma0", c.anneal.sigma0);
    a.read("sigma_decay", c.anneal.sigma_decay);
    a.read("penalty", c.anneal.penalty);
  }

  if (top.has("handles")) {
    Section h(top.raw("handles"), "handles", {"placement", "count", "file"});
    if (const auto placement = h.get<std::string>("placement")) {
      if (*placement == "displacement") {
        c.handles.placement = HandlePlacement::kDisplacement;
      } else if (*placement == "spatial") {
        c.handles.placement = HandlePlacement::kSpatial;
      } else if (*placement == "file") {
        c.handles.placement = HandlePlacement::kFile;
      } else {
        throw ConfigError("handles.placement must be \"displacement\", \"spatial\" or \"file\"");
      }
    }
    h.read("count", c.handles.count);
    if (const auto file = h.get<std::string>("file")) c.handles.file = resolve(base_dir, *file);
  }

  c.output = resolve(base_dir, top.get<std::string>("output").value_or("out"));
  top.read("seed", c.seed);
  c.anneal.seed = c.seed;
  top.read("write_meshes", c.write_meshes);
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (!fs::exists(mesh)) throw ConfigError("mesh file not found: " + mesh.string());
  if (!fs::exists(object)) throw ConfigError("object file not found: " + object.string());
  if (handles.placement == HandlePlacement::kFile && !handles.file.empty() && !fs::exists(handles.file)) {
    throw ConfigError("handle file not found: " + handles.file.string());
  }
  material.validate();
  if (!(thickness > 0.0)) throw ConfigError("material: thickness_mm must be > 0");
  if (!(surface_spacing > 0.0)) throw ConfigError("surface: spacing must be > 0");
  if (surface_sigma && !(*surface_sigma > 0.0)) throw ConfigError("surface: sigma must be > 0");
  if (!(direction.norm() > 0.0)) throw ConfigError("path: direction must be non-zero");
  if (length && !(*length > 0.0)) throw ConfigError("path: length must be > 0");
  if (h_in && !(*h_in > 0.0)) throw ConfigError("path: h_in must be > 0");
  for (int v : fixed_vertices) {
    if (v < 0) throw ConfigError("boundary: negative vertex index " + std::to_string(v));
  }
  solver.validate();
  target.validate();
  anneal.validate();
  if (handles.placement == HandlePlacement::kSpatial && handles.count < 1) throw ConfigError("handles: count must be >= 1");
  if (handles.placement == HandlePlacement::kFile && handles.file.empty()) throw ConfigError("handles: placement \"file\" needs a file");
}

json RunConfig::to_json() const {
  json j;
  j["mesh"] = mesh.string();
  j["object"] = object.string();
  j["material"] = {{"mu", material.mu},
                   {"lambda", material.lambda},
                   {"sigma_yield", material.sigma_yield},
                   {"thickness_mm", thickness}};
  j["surface"] = {{"spacing", surface_spacing}, {"sigma", optional_json(surface_sigma)}};
  j["path"] = {{"start", {start.x(), start.y()}},
               {"start_rotation", start_rotation},
               {"direction", {direction.x(), direction.y()}},
               {"length", length ? json(*length) : json("auto")},
               {"h_in", optional_json(h_in)},
               {"rotation", total_rotation}};
  json boundary = {{"fixed_vertices", fixed_vertices},
                   {"mode", fixed_mode == ConstraintMode::kAllAxes ? "all_axes" : "insertion_axis"}};
  if (fixed_box) {
    boundary["fixed_box"] = {{"min", {fixed_box->min().x(), fixed_box->min().y()}},
                             {"max", {fixed_box->max().x(), fixed_box->max().y()}}};
  }
  j["boundary"] = boundary;
  j["solver"] = {{"constraint_tol", solver.constraint_tol},
                 {"kkt_tol", solver.kkt_tol},
                 {"max_sqp_iters", solver.max_sqp_iters},
                 {"refinement_points", solver.refinement_points},
                 {"contact_band", optional_json(solver.contact_band)},
                 {"max_refinement_rounds", solver.max_refinement_rounds},
                 {"refine", solver.refine},
                 {"von_mises", solver.von_mises == VonMisesModel::kPlaneStrain ? "plane_strain" : "plane_stress"}};
  json target_j = {{"mode", target.mode == CouplingMode::kLoose ? "loose" : "tight"},
                   {"grip", bounds_json(target.grip)},
                   {"insertion", bounds_json(target.insertion)},
                   {"removal", bounds_json(target.removal)},
                   {"sigma_yield", optional_json(target.sigma_yield)}};
  if (!target.force_profile.empty()) target_j["force_profile"] = target.force_profile;
  j["target"] = target_j;
  j["anneal"] = {{"max_iterations", anneal.max_iterations}, {"t0", anneal.t0},
                 {"alpha", anneal.alpha},                   {"sigma0", anneal.sigma0},
                 {"sigma_decay", anneal.sigma_decay},       {"penalty", anneal.penalty}};
  const char* placement = handles.placement == HandlePlacement::kSpatial ? "spatial"
                          : handles.placement == HandlePlacement::kFile  ? "file"
                                                                         : "displacement";
  json handles_j = {{"placement", placement}, {"count", handles.count}};
  if (!handles.file.empty()) handles_j["file"] = handles.file.string();
  j["handles"] = handles_j;
  j["output"] = output.string();
  j["seed"] = seed;
  j["write_meshes"] = write_meshes;
  return j;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j, fs::absolute(path).parent_path());
}

InsertionProblem build_problem(const RunConfig& config) {
  if (!fs::exists(config.mesh)) throw ConfigError("mesh file not found: " + config.mesh.string());
  if (!fs::exists(config.object)) throw ConfigError("object file not found: " + config.object.string());
  auto mesh = std::make_shared<const Mesh>(load_mesh(config.mesh));
  if (mesh->dim() != 2) throw ConfigError("insertion simulation needs a 2D mesh: " + config.mesh.string());
  const Polyline object = validated_polyline(load_polyline(config.object));

  RigidPose start;
  start.translation = config.start;
  start.rotation = config.start_rotation;
  const double length = config.length.value_or(auto_insertion_length(*mesh, object, start, config.direction));
  const double h_in = config.h_in.value_or(length / 40.0);
  const int increments = path_increments(length, h_in);

  InsertionProblem p{
      .mesh = mesh,
      .material = config.material,
      .thickness = config.thickness,
      .surface = build_surface(object, config.surface_spacing, config.surface_sigma),
      .path = InsertionPath::linear(start, config.direction, h_in * increments, increments, config.total_rotation),
      .fixed = {},
      .settings = config.solver,
  };

  std::set<int> fixed(config.fixed_vertices.begin(), config.fixed_vertices.end());
  for (int v : fixed) {
    if (v >= mesh->vertex_count()) {
      throw ConfigError("boundary: vertex " + std::to_string(v) + " outside mesh with " +
                        std::to_string(mesh->vertex_count()) + " vertices");
    }
  }
  if (config.fixed_box) {
    for (int v = 0; v < mesh->vertex_count(); ++v) {
      if (config.fixed_box->contains(mesh->vertex2(v))) fixed.insert(v);
    }
  }
  p.fixed = apply_boundary_conditions(*mesh, {std::vector<int>(fixed.begin(), fixed.end()), config.fixed_mode},
                                      p.path.axis());
  return p;
}

}  // namespace coupler
