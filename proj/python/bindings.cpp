#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tcbf/errors.hpp"
#include "tcbf/heightfield.hpp"
#include "tcbf/io.hpp"
#include "tcbf/model.hpp"
#include "tcbf/planner.hpp"
#include "tcbf/safety.hpp"
#include "tcbf/vehicle.hpp"

namespace py = pybind11;
using namespace tcbf;

namespace {

py::array_t<float> heights_array(const Heightfield& hf) {
  py::array_t<float> out({hf.rows(), hf.cols()});
  std::copy(hf.heights().begin(), hf.heights().end(), out.mutable_data());
  return out;
}

py::array_t<float> patch_array(const ObservationPatch& p) {
  py::array_t<float> out({kPatchRows, kPatchCols});
  std::copy(p.values.begin(), p.values.end(), out.mutable_data());
  return out;
}

ObservationPatch patch_from(py::array_t<float, py::array::c_style | py::array::forcecast> a) {
  if (a.size() != kPatchSize) throw ValidationError("patch must have " + std::to_string(kPatchSize) + " values");
  ObservationPatch p;
  std::copy(a.data(), a.data() + a.size(), p.values.begin());
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Traversability barrier learning and safe planning on heightfields";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.attr("PATCH_ROWS") = kPatchRows;
  m.attr("PATCH_COLS") = kPatchCols;
  m.attr("TERRAIN_RECIPE_VERSION") = kTerrainRecipeVersion;

  py::enum_<Difficulty>(m, "Difficulty")
      .value("low", Difficulty::low)
      .value("medium", Difficulty::medium)
      .value("high", Difficulty::high);

  py::class_<RobotState>(m, "RobotState")
      .def(py::init<>())
      .def_readwrite("x", &RobotState::x)
      .def_readwrite("y", &RobotState::y)
      .def_readwrite("z", &RobotState::z)
      .def_readwrite("roll", &RobotState::roll)
      .def_readwrite("pitch", &RobotState::pitch)
      .def_readwrite("yaw", &RobotState::yaw);

  py::class_<Control>(m, "Control")
      .def(py::init<double, double>(), py::arg("v"), py::arg("omega"))
      .def_readwrite("v", &Control::v)
      .def_readwrite("omega", &Control::omega);

  py::class_<TerrainSpec>(m, "TerrainSpec")
      .def(py::init<>())
      .def_readwrite("seed", &TerrainSpec::seed)
      .def_readwrite("difficulty", &TerrainSpec::difficulty)
      .def_readwrite("width", &TerrainSpec::width)
      .def_readwrite("length", &TerrainSpec::length)
      .def_readwrite("resolution", &TerrainSpec::resolution);

  py::class_<Heightfield>(m, "Heightfield")
      .def_static("flat", [](std::uint32_t cols, std::uint32_t rows, float res) { return Heightfield::flat(cols, rows, res); },
                  py::arg("cols"), py::arg("rows"), py::arg("resolution"))
      .def_property_readonly("cols", &Heightfield::cols)
      .def_property_readonly("rows", &Heightfield::rows)
      .def_property_readonly("resolution", &Heightfield::resolution)
      .def_property_readonly("heights", &heights_array)
      .def("elevation_at", &Heightfield::elevation_at)
      .def("__eq__", [](const Heightfield& a, const Heightfield& b) { return a == b; });

  m.def("generate", &generate, py::arg("spec"));
  m.def("load_heightfield", &io::load_heightfield);
  m.def("save_heightfield", &io::save_heightfield);
  m.def("encode_heightfield", [](const Heightfield& hf) {
    const io::Bytes b = io::encode_heightfield(hf);
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
  });

  m.def("settle_pose", [](const Heightfield& hf, double x, double y, double yaw) {
    return settle_pose(hf, x, y, yaw, VehicleGeometry{});
  }, py::arg("heightfield"), py::arg("x"), py::arg("y"), py::arg("yaw"));
  m.def("extract_patch", [](const Heightfield& hf, const RobotState& s) { return patch_array(extract_patch(hf, s)); });
  m.def("is_safe_state", [](const RobotState& s) { return classify_state(s, SafetyThresholds{}).safe(); });

  py::class_<TCBFNetwork>(m, "Network")
      .def(py::init([](std::uint64_t seed) {
        TCBFNetwork net;
        net.initialize(seed);
        return net;
      }), py::arg("seed") = 0)
      .def_property_readonly("parameter_count", &TCBFNetwork::parameter_count)
      .def("h", [](const TCBFNetwork& net, py::array_t<float, py::array::c_style | py::array::forcecast> patch) {
        return net.h(patch_from(patch));
      })
      .def("encode_control", &TCBFNetwork::encode_control);
  m.def("load_model", [](const std::filesystem::path& p) { return io::load_model(p).network; });

  py::class_<PlannerConfig>(m, "PlannerConfig")
      .def(py::init<>())
      .def_readwrite("horizon", &PlannerConfig::horizon)
      .def_readwrite("v_samples", &PlannerConfig::v_samples)
      .def_readwrite("omega_samples", &PlannerConfig::omega_samples)
      .def_readwrite("alpha_gamma", &PlannerConfig::alpha_gamma)
      .def_readwrite("use_cbf", &PlannerConfig::use_cbf)
      .def_readwrite("max_steps", &PlannerConfig::max_steps)
      .def_readwrite("goal_tol", &PlannerConfig::goal_tol);

  m.def("navigate", [](const Heightfield& hf, const TCBFNetwork* net, const RobotState& start,
                       std::pair<double, double> goal, const PlannerConfig& cfg) {
    const NavigationResult r = navigate(hf, net, start, {goal.first, goal.second}, cfg);
    return py::make_tuple(std::string(to_string(r.outcome)), r.trajectory.states, r.trajectory.controls);
  }, py::arg("heightfield"), py::arg("network"), py::arg("start"), py::arg("goal"), py::arg("config"));
}
