#include "cirnn/checkpoint.hpp"

#include "json_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

namespace cirnn {

namespace detail {

json matrix_to_json(const Mat& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return json{{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Mat matrix_from_json(const json& j) {
  const auto& shape = j.at("shape");
  if (!shape.is_array() || shape.size() != 2) throw FormatError("matrix: shape must be [rows, cols]");
  const auto rows = shape[0].get<Eigen::Index>();
  const auto cols = shape[1].get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
    throw FormatError("matrix: data length does not match declared shape");
  Mat m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = data[k++];
      m(i, c) = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    }
  return m;
}

json vector_to_json(const Vec& v) {
  json out = json::array();
  for (double x : v) out.push_back(x);
  return out;
}

Vec vector_from_json(const json& j) {
  if (!j.is_array()) throw FormatError("vector: expected array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
  return v;
}

json matrices_to_json(const std::vector<Mat>& ms) {
  json out = json::array();
  for (const auto& m : ms) out.push_back(matrix_to_json(m));
  return out;
}

std::vector<Mat> matrices_from_json(const json& j) {
  std::vector<Mat> out;
  for (const auto& e : j) out.push_back(matrix_from_json(e));
  return out;
}

json vectors_to_json(const std::vector<Vec>& vs) {
  json out = json::array();
  for (const auto& v : vs) out.push_back(vector_to_json(v));
  return out;
}

std::vector<Vec> vectors_from_json(const json& j) {
  std::vector<Vec> out;
  for (const auto& e : j) out.push_back(vector_from_json(e));
  return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

namespace {

using detail::json;

constexpr int kCheckpointVersion = 1;

json dims_to_json(const LayerDims& d) {
  return json{{"n_x", d.n_x}, {"n_u", d.n_u}, {"n_y", d.n_y}, {"widths", d.widths}};
}

LayerDims dims_from_json(const json& j) {
  LayerDims d;
  d.n_x = j.at("n_x").get<int>();
  d.n_u = j.at("n_u").get<int>();
  d.n_y = j.at("n_y").get<int>();
  d.widths = j.at("widths").get<std::vector<int>>();
  return d;
}

}  // namespace

std::string model_to_json(const Model& m) {
  using namespace detail;
  json j;
  j["format"] = "cirnn-model";
  j["version"] = kCheckpointVersion;
  j["kind"] = to_string(m.kind);
  j["activation"] = to_string(m.activation);
  j["dims"] = dims_to_json(m.dims());
  json w;
  if (const auto* e = std::get_if<ExplicitParams>(&m.params)) {
    j["form"] = "explicit";
    w["A"] = matrices_to_json(e->A);
    w["B"] = matrices_to_json(e->B);
    w["b"] = vectors_to_json(e->b);
    w["C"] = matrix_to_json(e->C);
    w["D"] = matrix_to_json(e->D);
  } else {
    const auto& p = std::get<ImplicitParams>(m.params);
    j["form"] = "implicit";
    w["E"] = matrices_to_json(p.E);
    w["W"] = matrices_to_json(p.W);
    w["B"] = matrices_to_json(p.B);
    w["b"] = vectors_to_json(p.b);
    w["C"] = matrix_to_json(p.C);
    w["D"] = matrix_to_json(p.D);
  }
  j["weights"] = std::move(w);
  return dump(j);
}

Model model_from_json(const std::string& text) {
  using namespace detail;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "cirnn-model")
      throw FormatError("model checkpoint: unexpected format tag");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("model checkpoint: unsupported version");
    Model m;
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.activation = parse_activation(j.at("activation").get<std::string>());
    const LayerDims dims = dims_from_json(j.at("dims"));
    const auto& w = j.at("weights");
    const auto form = j.at("form").get<std::string>();
    if (form == "explicit") {
      ExplicitParams p;
      p.A = matrices_from_json(w.at("A"));
      p.B = matrices_from_json(w.at("B"));
      p.b = vectors_from_json(w.at("b"));
      p.C = matrix_from_json(w.at("C"));
      p.D = matrix_from_json(w.at("D"));
      p.validate();
      m.params = std::move(p);
    } else if (form == "implicit") {
      ImplicitParams p;
      p.E = matrices_from_json(w.at("E"));
      p.W = matrices_from_json(w.at("W"));
      p.B = matrices_from_json(w.at("B"));
      p.b = vectors_from_json(w.at("b"));
      p.C = matrix_from_json(w.at("C"));
      p.D = matrix_from_json(w.at("D"));
      p.validate();
      m.params = std::move(p);
    } else {
      throw FormatError("model checkpoint: unknown form '" + form + "'");
    }
    if (!(m.dims() == dims)) throw FormatError("model checkpoint: declared dims disagree with weights");
    if (is_implicit(m.kind) != (form == "implicit"))
      throw FormatError("model checkpoint: kind does not match form");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model checkpoint: ") + e.what());
  }
}

void save_model(const Model& m, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(m));
}

Model load_model(const std::filesystem::path& path) { return model_from_json(read_text_file(path)); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::filesystem::filesystem_error("cannot open", path,
                                            std::make_error_code(std::errc::no_such_file_or_directory));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::filesystem::filesystem_error("cannot write", path,
                                            std::make_error_code(std::errc::permission_denied));
  out << text;
  if (!out)
    throw std::filesystem::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
}

}  // namespace cirnn
