#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmmpose/bench.hpp"
#include "lmmpose/metrics.hpp"
#include "lmmpose/pose_repr.hpp"
#include "lmmpose/solvers.hpp"
#include "lmmpose/synth.hpp"

namespace lmmpose {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Filesystem helpers

// Temp-then-rename so partially written files never land under their final
// name.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("atomic_write_text: cannot open '" + tmp.string() + "'");
        }
        out << content;
        if (!out.good()) {
            throw std::runtime_error("atomic_write_text: write failed for '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("read_text: cannot open '" + path.string() + "'");
    }
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

// Exclusive lock on an output directory; released on destruction.
class DirLock {
  public:
    explicit DirLock(const std::filesystem::path& dir) : path_(dir / ".lmmpose.lock") {
        std::filesystem::create_directories(dir);
        FILE* f = std::fopen(path_.c_str(), "wx");
        if (f == nullptr) {
            throw std::runtime_error("DirLock: '" + path_.string() +
                                     "' exists; another command may be writing to this directory");
        }
        std::fclose(f);
    }
    ~DirLock() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

  private:
    std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Config reading with field-named errors

namespace detail {

// Best-effort 1-based line of the first occurrence of "key" in the raw text.
inline int find_key_line(const std::string& raw, const std::string& key) {
    const std::string needle = "\"" + key + "\"";
    const std::size_t pos = raw.find(needle);
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

}  // namespace detail

class ConfigReader {
  public:
    ConfigReader(const Json& j, const std::string& raw, std::string context)
        : j_(j), raw_(raw), context_(std::move(context)) {
        if (!j_.is_object()) {
            throw std::invalid_argument("config: '" + context_ + "' must be a JSON object");
        }
    }

    [[noreturn]] void fail(const std::string& key, const std::string& why) const {
        const int line = detail::find_key_line(raw_, key);
        std::ostringstream oss;
        oss << "config: field '" << qualify(key) << "' " << why;
        if (line > 0) oss << " (line " << line << ")";
        throw std::invalid_argument(oss.str());
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    T get(const std::string& key) const {
        if (!j_.contains(key)) fail(key, "is missing");
        try {
            return j_.at(key).get<T>();
        } catch (const Json::exception&) {
            fail(key, "has the wrong type");
        }
    }

    template <typename T>
    T get_or(const std::string& key, T fallback) const {
        return j_.contains(key) ? get<T>(key) : fallback;
    }

    ConfigReader child(const std::string& key) const {
        if (!j_.contains(key)) fail(key, "is missing");
        return ConfigReader(j_.at(key), raw_, qualify(key));
    }

    std::optional<ConfigReader> child_opt(const std::string& key) const {
        if (!j_.contains(key)) return std::nullopt;
        return ConfigReader(j_.at(key), raw_, qualify(key));
    }

    void check_keys(std::initializer_list<const char*> allowed) const {
        for (const auto& [key, value] : j_.items()) {
            bool ok = false;
            for (const char* a : allowed) {
                if (key == a) {
                    ok = true;
                    break;
                }
            }
            if (!ok) fail(key, "is not a recognized field");
        }
    }

    const Json& json() const { return j_; }
    const std::string& raw() const { return raw_; }

  private:
    std::string qualify(const std::string& key) const {
        return context_.empty() ? key : context_ + "." + key;
    }

    const Json& j_;
    const std::string& raw_;
    std::string context_;
};

inline Json parse_json_text(const std::string& raw, const std::string& what) {
    try {
        return Json::parse(raw);
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument(what + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Eigen <-> JSON

namespace detail {

inline Json vec_to_json(const Eigen::Vector3d& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Eigen::Vector3d vec3_from_json(const Json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 3) {
        throw std::invalid_argument(what + ": expected an array of 3 numbers");
    }
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline Json rotation_to_json(const Rotation& r) {
    Json out = Json::array();
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) out.push_back(r.matrix()(i, k));
    return out;
}

inline Rotation rotation_from_json(const Json& j, const std::string& what) {
    if (!j.is_array() || j.size() != 9) {
        throw std::invalid_argument(what + ": expected 9 row-major numbers");
    }
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) m(i, k) = j[static_cast<std::size_t>(3 * i + k)].get<double>();
    try {
        return Rotation(m);
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(what + ": " + e.what());
    }
}

template <int Cols>
inline Json matrix_to_json(const Eigen::Matrix<double, Eigen::Dynamic, Cols>& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (int c = 0; c < Cols; ++c) row.push_back(m(i, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <int Cols>
inline Eigen::Matrix<double, Eigen::Dynamic, Cols> matrix_from_json(const Json& j, const std::string& what,
                                                                    Eigen::Index expected_rows = -1) {
    if (!j.is_array()) {
        throw std::invalid_argument(what + ": expected an array of rows");
    }
    if (expected_rows >= 0 && static_cast<Eigen::Index>(j.size()) != expected_rows) {
        throw std::invalid_argument(what + ": row count is inconsistent with the object");
    }
    Eigen::Matrix<double, Eigen::Dynamic, Cols> m(static_cast<Eigen::Index>(j.size()), Cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        const Json& row = j[i];
        if (!row.is_array() || row.size() != Cols) {
            throw std::invalid_argument(what + ": each row must have " + std::to_string(Cols) + " numbers");
        }
        for (int c = 0; c < Cols; ++c) m(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Scene files

inline Json codebook_to_json(const SizeCodebook& book) {
    Json out = Json::object();
    for (const auto& [category, s_avg] : book.entries()) out[category] = detail::vec_to_json(s_avg);
    return out;
}

inline SizeCodebook codebook_from_json(const Json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("codebook: expected an object {category: [sx, sy, sz]}");
    }
    SizeCodebook book;
    for (const auto& [category, value] : j.items()) {
        book.insert(category, detail::vec3_from_json(value, "codebook." + category));
    }
    return book;
}

inline Json scene_to_json(const Scene& scene, const SizeCodebook* codebook = nullptr) {
    Json j;
    j["version"] = kSchemaVersion;
    j["intrinsics"] = {{"fx", scene.intrinsics.fx},
                       {"fy", scene.intrinsics.fy},
                       {"cx", scene.intrinsics.cx},
                       {"cy", scene.intrinsics.cy}};
    if (codebook != nullptr) j["codebook"] = codebook_to_json(*codebook);
    Json objects = Json::array();
    for (const auto& obj : scene.objects) {
        Json o;
        o["id"] = obj.id;
        o["category"] = obj.category;
        o["symmetric"] = obj.symmetric;
        o["s_norm"] = detail::vec_to_json(obj.s_norm);
        o["gt_pose"] = {{"rotation", detail::rotation_to_json(obj.gt.rotation)},
                        {"translation", detail::vec_to_json(obj.gt.translation)},
                        {"size", detail::vec_to_json(obj.gt.size)}};
        o["detection"] = {{"c_x", obj.detection.c_x},
                          {"c_y", obj.detection.c_y},
                          {"w_box", obj.detection.w_box},
                          {"h_box", obj.detection.h_box},
                          {"s_in", obj.detection.s_in}};
        o["pixels"] = detail::matrix_to_json<2>(obj.pixels);
        o["gt_nocs"] = detail::matrix_to_json<3>(obj.gt_nocs);
        Json mask = Json::array();
        for (Eigen::Index i = 0; i < obj.mask.size(); ++i) mask.push_back(static_cast<bool>(obj.mask(i)));
        o["mask"] = std::move(mask);
        o["outlier_indices"] = obj.outlier_indices;
        Json comps = Json::array();
        for (const auto& comp : obj.mixture.components) {
            comps.push_back({{"mu", detail::matrix_to_json<3>(comp.mu)},
                             {"sigma2", detail::matrix_to_json<3>(comp.sigma2)}});
        }
        o["mixture"] = {{"weights", Json::array({obj.mixture.weights(0), obj.mixture.weights(1)})},
                        {"components", std::move(comps)}};
        objects.push_back(std::move(o));
    }
    j["objects"] = std::move(objects);
    return j;
}

struct SceneFile {
    Scene scene;
    std::optional<SizeCodebook> codebook;
};

inline SceneFile scene_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("version") || j.at("version").get<int>() != kSchemaVersion) {
        throw std::invalid_argument("scene: missing or unsupported schema version (expected 1)");
    }
    SceneFile out;
    const Json& ji = j.at("intrinsics");
    out.scene.intrinsics = Intrinsics(ji.at("fx").get<double>(), ji.at("fy").get<double>(),
                                      ji.at("cx").get<double>(), ji.at("cy").get<double>());
    if (j.contains("codebook")) out.codebook = codebook_from_json(j.at("codebook"));
    for (const Json& o : j.at("objects")) {
        SceneObject obj;
        obj.id = o.at("id").get<int>();
        obj.category = o.at("category").get<std::string>();
        obj.symmetric = o.at("symmetric").get<bool>();
        const std::string ctx = "scene object " + std::to_string(obj.id);
        obj.s_norm = detail::vec3_from_json(o.at("s_norm"), ctx + ".s_norm");
        const Json& gp = o.at("gt_pose");
        obj.gt = Pose9D(detail::rotation_from_json(gp.at("rotation"), ctx + ".gt_pose.rotation"),
                        detail::vec3_from_json(gp.at("translation"), ctx + ".gt_pose.translation"),
                        detail::vec3_from_json(gp.at("size"), ctx + ".gt_pose.size"));
        const Json& det = o.at("detection");
        obj.detection = DetectionBox(det.at("c_x").get<double>(), det.at("c_y").get<double>(),
                                     det.at("w_box").get<double>(), det.at("h_box").get<double>(),
                                     det.at("s_in").get<double>());
        obj.gt_nocs = detail::matrix_from_json<3>(o.at("gt_nocs"), ctx + ".gt_nocs");
        const Eigen::Index n = obj.gt_nocs.rows();
        obj.pixels = detail::matrix_from_json<2>(o.at("pixels"), ctx + ".pixels", n);
        const Json& jm = o.at("mask");
        if (static_cast<Eigen::Index>(jm.size()) != n) {
            throw std::invalid_argument(ctx + ".mask: length is inconsistent with gt_nocs");
        }
        obj.mask.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) obj.mask(i) = jm[static_cast<std::size_t>(i)].get<bool>();
        obj.outlier_indices = o.value("outlier_indices", std::vector<int>{});
        const Json& mix = o.at("mixture");
        const Json& weights = mix.at("weights");
        const Json& comps = mix.at("components");
        if (!comps.is_array() || comps.size() != 2) {
            throw std::invalid_argument(ctx + ".mixture: expected exactly 2 components");
        }
        std::array<LaplacianMap, 2> maps;
        for (int c = 0; c < 2; ++c) {
            const std::string cctx = ctx + ".mixture.components[" + std::to_string(c) + "]";
            maps[static_cast<std::size_t>(c)] =
                LaplacianMap(detail::matrix_from_json<3>(comps[static_cast<std::size_t>(c)].at("mu"), cctx + ".mu", n),
                             detail::matrix_from_json<3>(comps[static_cast<std::size_t>(c)].at("sigma2"),
                                                         cctx + ".sigma2", n),
                             obj.mask);
        }
        obj.mixture = LaplacianMixture(maps[0], maps[1],
                                       Eigen::Vector2d(weights.at(0).get<double>(), weights.at(1).get<double>()));
        out.scene.objects.push_back(std::move(obj));
    }
    return out;
}

inline void save_scene(const std::filesystem::path& path, const Scene& scene,
                       const SizeCodebook* codebook = nullptr) {
    atomic_write_text(path, scene_to_json(scene, codebook).dump(2) + "\n");
}

inline SceneFile load_scene(const std::filesystem::path& path) {
    return scene_from_json(parse_json_text(read_text(path), "scene '" + path.string() + "'"));
}

// ---------------------------------------------------------------------------
// Result files

struct ObjectResult {
    int id = 0;
    bool ok = true;
    std::string error;
    Rotation rotation;
    Eigen::Vector3d t_norm = Eigen::Vector3d::Zero();
    Eigen::Vector3d s_norm = Eigen::Vector3d::Ones() / std::sqrt(3.0);
    Eigen::Vector3d s_out = Eigen::Vector3d::Zero();
    std::optional<double> d;
    double objective = 0.0;
    int iterations = 0;
    int inlier_count = 0;
};

struct ResultFile {
    std::string solver;
    std::vector<ObjectResult> results;
};

inline Json results_to_json(const ResultFile& rf) {
    Json j;
    j["version"] = kSchemaVersion;
    j["solver"] = rf.solver;
    Json arr = Json::array();
    for (const auto& r : rf.results) {
        Json o;
        o["id"] = r.id;
        o["status"] = r.ok ? "ok" : "failed";
        if (!r.ok) {
            o["error"] = r.error;
        } else {
            o["rotation"] = detail::rotation_to_json(r.rotation);
            o["t_norm"] = detail::vec_to_json(r.t_norm);
            o["s_norm"] = detail::vec_to_json(r.s_norm);
            o["s_out"] = detail::vec_to_json(r.s_out);
            if (r.d.has_value()) o["d"] = *r.d;
            o["objective"] = r.objective;
            o["iterations"] = r.iterations;
            o["inlier_count"] = r.inlier_count;
        }
        arr.push_back(std::move(o));
    }
    j["results"] = std::move(arr);
    return j;
}

inline ResultFile results_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("version") || j.at("version").get<int>() != kSchemaVersion) {
        throw std::invalid_argument("results: missing or unsupported schema version (expected 1)");
    }
    ResultFile rf;
    rf.solver = j.at("solver").get<std::string>();
    for (const Json& o : j.at("results")) {
        ObjectResult r;
        r.id = o.at("id").get<int>();
        r.ok = o.at("status").get<std::string>() == "ok";
        if (!r.ok) {
            r.error = o.value("error", "");
        } else {
            const std::string ctx = "result " + std::to_string(r.id);
            r.rotation = detail::rotation_from_json(o.at("rotation"), ctx + ".rotation");
            r.t_norm = detail::vec3_from_json(o.at("t_norm"), ctx + ".t_norm");
            r.s_norm = detail::vec3_from_json(o.at("s_norm"), ctx + ".s_norm");
            r.s_out = detail::vec3_from_json(o.at("s_out"), ctx + ".s_out");
            if (o.contains("d")) r.d = o.at("d").get<double>();
            r.objective = o.at("objective").get<double>();
            r.iterations = o.at("iterations").get<int>();
            r.inlier_count = o.at("inlier_count").get<int>();
        }
        rf.results.push_back(std::move(r));
    }
    return rf;
}

inline void save_results(const std::filesystem::path& path, const ResultFile& rf) {
    atomic_write_text(path, results_to_json(rf).dump(2) + "\n");
}

inline ResultFile load_results(const std::filesystem::path& path) {
    return results_from_json(parse_json_text(read_text(path), "results '" + path.string() + "'"));
}

// ---------------------------------------------------------------------------
// Tables

namespace detail {

inline std::string format_cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace detail

inline std::string metric_table_csv(const MetricTable& table) {
    std::ostringstream oss;
    oss << "category";
    for (const auto& c : table.columns) oss << "," << c;
    oss << "\n";
    for (const auto& [name, values] : table.rows) {
        oss << name;
        for (const double v : values) oss << "," << detail::format_cell(v);
        oss << "\n";
    }
    return oss.str();
}

inline std::string metric_table_text(const MetricTable& table) {
    std::size_t name_w = 8;
    for (const auto& [name, values] : table.rows) name_w = std::max(name_w, name.size());
    std::ostringstream oss;
    oss << std::left << std::setw(static_cast<int>(name_w) + 2) << "category" << std::right;
    for (const auto& c : table.columns) oss << std::setw(12) << c;
    oss << "\n";
    for (const auto& [name, values] : table.rows) {
        oss << std::left << std::setw(static_cast<int>(name_w) + 2) << name << std::right;
        for (const double v : values) oss << std::setw(12) << detail::format_cell(v);
        oss << "\n";
    }
    return oss.str();
}

inline std::string ap_curve_csv(const std::vector<std::pair<double, double>>& curve) {
    std::ostringstream oss;
    oss << "threshold,ap\n";
    for (const auto& [threshold, ap] : curve) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f,%.4f\n", threshold, ap);
        oss << buf;
    }
    return oss.str();
}

// ---------------------------------------------------------------------------
// Tool configuration

struct ToolConfig {
    int n_scenes = 1;
    SceneGenConfig generator;
    int shape_points = 128;
    std::vector<std::pair<std::string, PrimitiveSpec>> shapes;
    Intrinsics intrinsics{500.0, 500.0, 320.0, 240.0};
    NoiseSpec noise;
    SolverConfig solver;
    RansacConfig ransac;
    int n_rot_sym = 100;
};

namespace detail {

inline PrimitiveKind primitive_kind_from_string(const std::string& s, const ConfigReader& reader) {
    if (s == "box") return PrimitiveKind::kBox;
    if (s == "cylinder") return PrimitiveKind::kCylinder;
    if (s == "ellipsoid") return PrimitiveKind::kEllipsoid;
    if (s == "composite") return PrimitiveKind::kComposite;
    reader.fail("kind", "must be one of box, cylinder, ellipsoid, composite");
}

inline Intrinsics intrinsics_from(const ConfigReader& reader) {
    reader.check_keys({"fx", "fy", "cx", "cy"});
    return Intrinsics(reader.get<double>("fx"), reader.get<double>("fy"), reader.get<double>("cx"),
                      reader.get<double>("cy"));
}

inline NoiseSpec noise_from(const ConfigReader& reader) {
    reader.check_keys({"b_range", "outlier_fraction", "sigma_mode", "miscalibration_factor", "pixel_jitter"});
    NoiseSpec spec;
    if (reader.has("b_range")) {
        const auto range = reader.get<std::vector<double>>("b_range");
        if (range.size() != 2) reader.fail("b_range", "must be [low, high]");
        spec.b_low = range[0];
        spec.b_high = range[1];
    }
    spec.outlier_fraction = reader.get_or<double>("outlier_fraction", spec.outlier_fraction);
    const std::string mode = reader.get_or<std::string>("sigma_mode", "honest");
    if (mode == "honest") {
        spec.sigma_honest = true;
    } else if (mode == "miscalibrated") {
        spec.sigma_honest = false;
    } else {
        reader.fail("sigma_mode", "must be 'honest' or 'miscalibrated'");
    }
    spec.miscalibration_factor = reader.get_or<double>("miscalibration_factor", spec.miscalibration_factor);
    spec.pixel_jitter = reader.get_or<double>("pixel_jitter", spec.pixel_jitter);
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        reader.fail("b_range", std::string("is invalid: ") + e.what());
    }
    return spec;
}

inline SolverConfig solver_from(const ConfigReader& reader) {
    reader.check_keys({"max_iterations", "convergence_tol", "huber_like_eps", "mc_samples", "seed",
                       "use_uncertainty_weights", "robust_kernel", "ransac_inlier_threshold_px",
                       "ransac_rounds"});
    SolverConfig cfg;
    cfg.max_iterations = reader.get_or<int>("max_iterations", cfg.max_iterations);
    cfg.convergence_tol = reader.get_or<double>("convergence_tol", cfg.convergence_tol);
    cfg.huber_like_eps = reader.get_or<double>("huber_like_eps", cfg.huber_like_eps);
    cfg.mc_samples = reader.get_or<int>("mc_samples", cfg.mc_samples);
    cfg.seed = reader.get_or<std::uint64_t>("seed", cfg.seed);
    cfg.use_uncertainty_weights = reader.get_or<bool>("use_uncertainty_weights", cfg.use_uncertainty_weights);
    const std::string kernel = reader.get_or<std::string>("robust_kernel", "l1");
    if (kernel == "l1") {
        cfg.kernel = RobustKernel::kL1;
    } else if (kernel == "l2") {
        cfg.kernel = RobustKernel::kL2;
    } else {
        reader.fail("robust_kernel", "must be 'l1' or 'l2'");
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        reader.fail("max_iterations", std::string("is invalid: ") + e.what());
    }
    return cfg;
}

inline void generator_from(const ConfigReader& reader, ToolConfig& cfg) {
    reader.check_keys({"n_scenes", "n_objects", "image_width", "image_height", "s_in", "d_range", "z_range",
                       "center_margin_frac", "shape_points", "shapes"});
    cfg.n_scenes = reader.get_or<int>("n_scenes", cfg.n_scenes);
    cfg.generator.n_objects = reader.get_or<int>("n_objects", cfg.generator.n_objects);
    cfg.generator.image_width = reader.get_or<double>("image_width", cfg.generator.image_width);
    cfg.generator.image_height = reader.get_or<double>("image_height", cfg.generator.image_height);
    cfg.generator.s_in = reader.get_or<double>("s_in", cfg.generator.s_in);
    if (reader.has("d_range")) {
        const auto r = reader.get<std::vector<double>>("d_range");
        if (r.size() != 2) reader.fail("d_range", "must be [low, high]");
        cfg.generator.d_low = r[0];
        cfg.generator.d_high = r[1];
    }
    if (reader.has("z_range")) {
        const auto r = reader.get<std::vector<double>>("z_range");
        if (r.size() != 2) reader.fail("z_range", "must be [low, high]");
        cfg.generator.z_low = r[0];
        cfg.generator.z_high = r[1];
    }
    cfg.generator.center_margin_frac = reader.get_or<double>("center_margin_frac", cfg.generator.center_margin_frac);
    cfg.shape_points = reader.get_or<int>("shape_points", cfg.shape_points);
    if (reader.has("shapes")) {
        cfg.shapes.clear();
        const Json& arr = reader.json().at("shapes");
        if (!arr.is_array() || arr.empty()) reader.fail("shapes", "must be a nonempty array");
        for (const Json& s : arr) {
            ConfigReader sr(s, reader.raw(), "shapes[]");
            sr.check_keys({"category", "kind", "dims"});
            PrimitiveSpec prim;
            prim.kind = primitive_kind_from_string(sr.get<std::string>("kind"), sr);
            const auto dims = sr.get<std::vector<double>>("dims");
            if (dims.size() != 3) sr.fail("dims", "must be [dx, dy, dz]");
            prim.dims = Eigen::Vector3d(dims[0], dims[1], dims[2]);
            cfg.shapes.emplace_back(sr.get<std::string>("category"), prim);
        }
    }
    if (cfg.n_scenes < 1) reader.fail("n_scenes", "must be >= 1");
    try {
        cfg.generator.validate();
    } catch (const std::invalid_argument& e) {
        reader.fail("d_range", std::string("is invalid: ") + e.what());
    }
}

}  // namespace detail

inline ToolConfig tool_config_from_json(const Json& j, const std::string& raw) {
    ConfigReader root(j, raw, "");
    root.check_keys({"version", "generator", "intrinsics", "noise", "solver", "thresholds"});
    if (root.get<int>("version") != kSchemaVersion) root.fail("version", "must be 1");
    ToolConfig cfg;
    // Default shape set: one of each primitive family, two symmetric.
    cfg.shapes = {{"carton", {PrimitiveKind::kBox, {1.0, 2.0, 2.0}}},
                  {"can", {PrimitiveKind::kCylinder, {1.0, 1.6, 1.0}}},
                  {"ball", {PrimitiveKind::kEllipsoid, {1.0, 1.4, 1.0}}},
                  {"mug", {PrimitiveKind::kComposite, {1.0, 1.2, 1.0}}}};
    if (const auto gen = root.child_opt("generator")) detail::generator_from(*gen, cfg);
    if (const auto intr = root.child_opt("intrinsics")) cfg.intrinsics = detail::intrinsics_from(*intr);
    if (const auto noise = root.child_opt("noise")) cfg.noise = detail::noise_from(*noise);
    if (const auto solver = root.child_opt("solver")) {
        cfg.solver = detail::solver_from(*solver);
        cfg.ransac.solver = cfg.solver;
        cfg.ransac.inlier_threshold_px = solver->get_or<double>("ransac_inlier_threshold_px",
                                                                cfg.ransac.inlier_threshold_px);
        cfg.ransac.rounds = solver->get_or<int>("ransac_rounds", cfg.ransac.rounds);
        try {
            cfg.ransac.validate();
        } catch (const std::invalid_argument& e) {
            solver->fail("ransac_rounds", std::string("is invalid: ") + e.what());
        }
    }
    if (const auto thr = root.child_opt("thresholds")) {
        thr->check_keys({"n_rot_sym"});
        cfg.n_rot_sym = thr->get_or<int>("n_rot_sym", cfg.n_rot_sym);
        if (cfg.n_rot_sym < 1) thr->fail("n_rot_sym", "must be >= 1");
    }
    return cfg;
}

inline ToolConfig load_tool_config(const std::filesystem::path& path) {
    const std::string raw = read_text(path);
    return tool_config_from_json(parse_json_text(raw, "config '" + path.string() + "'"), raw);
}

// Bench specification: ablation variants or the SAP comparison.
struct BenchSpec {
    std::string mode = "ablation";  // or "sap"
    TrialSpec trial;
};

inline BenchSpec bench_spec_from_json(const Json& j, const std::string& raw) {
    ConfigReader root(j, raw, "");
    root.check_keys({"version", "mode", "generator", "intrinsics", "noise", "variants", "n_trials",
                     "base_seed", "sap"});
    if (root.get<int>("version") != kSchemaVersion) root.fail("version", "must be 1");
    BenchSpec spec;
    spec.mode = root.get_or<std::string>("mode", "ablation");
    if (spec.mode != "ablation" && spec.mode != "sap") root.fail("mode", "must be 'ablation' or 'sap'");

    ToolConfig base;
    base.shapes = {{"carton", {PrimitiveKind::kBox, {1.0, 2.0, 2.0}}}};
    if (const auto gen = root.child_opt("generator")) detail::generator_from(*gen, base);
    if (const auto intr = root.child_opt("intrinsics")) base.intrinsics = detail::intrinsics_from(*intr);
    if (const auto noise = root.child_opt("noise")) base.noise = detail::noise_from(*noise);
    spec.trial.shape_specs = base.shapes;
    spec.trial.shape_points = base.shape_points;
    spec.trial.generator = base.generator;
    spec.trial.intrinsics = base.intrinsics;
    spec.trial.noise = base.noise;
    spec.trial.n_trials = root.get_or<int>("n_trials", 1);
    spec.trial.base_seed = root.get_or<std::uint64_t>("base_seed", 0);

    if (!root.has("variants")) root.fail("variants", "is missing");
    const Json& variants = root.json().at("variants");
    if (!variants.is_array() || variants.empty()) root.fail("variants", "must be a nonempty array");
    for (const Json& v : variants) {
        ConfigReader vr(v, raw, "variants[]");
        vr.check_keys({"name", "solver"});
        SolverVariant variant;
        variant.name = vr.get<std::string>("name");
        variant.config = vr.has("solver") ? detail::solver_from(vr.child("solver")) : SolverConfig{};
        spec.trial.variants.push_back(std::move(variant));
    }

    if (const auto sap = root.child_opt("sap")) {
        sap->check_keys({"d_prior", "supply_exact_d", "iou_thresholds"});
        if (sap->has("d_prior")) {
            const auto r = sap->get<std::vector<double>>("d_prior");
            if (r.size() != 2) sap->fail("d_prior", "must be [low, high]");
            spec.trial.d_prior_low = r[0];
            spec.trial.d_prior_high = r[1];
        }
        spec.trial.supply_exact_d = sap->get_or<bool>("supply_exact_d", false);
        if (sap->has("iou_thresholds")) {
            spec.trial.iou_thresholds = sap->get<std::vector<double>>("iou_thresholds");
        }
    }
    try {
        spec.trial.validate();
    } catch (const std::invalid_argument& e) {
        root.fail("n_trials", std::string("is invalid: ") + e.what());
    }
    return spec;
}

inline BenchSpec load_bench_spec(const std::filesystem::path& path) {
    const std::string raw = read_text(path);
    return bench_spec_from_json(parse_json_text(raw, "bench spec '" + path.string() + "'"), raw);
}

}  // namespace lmmpose
