// Copyright (c) 2026, The budgetvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "budgetvit/cli.hpp"
#include "budgetvit/config.hpp"
#include "budgetvit/curriculum.hpp"
#include "budgetvit/errors.hpp"
#include "budgetvit/gradcheck.hpp"
#include "budgetvit/model.hpp"
#include "budgetvit/numerics.hpp"
#include "budgetvit/trainer.hpp"

namespace py = pybind11;
using namespace budgetvit;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  const double* p = a.data();
  return Tensor<double>(shape, AlignedVector<double>(p, p + a.size()));
}

Array to_array(const Tensor<double>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

// Runs a command body and returns (exit code, stdout, stderr).
template <typename Args, typename Fn>
py::tuple run_command(Fn fn, const Args& args) {
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = fn(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

GeluMode gelu_mode(const std::string& s) {
  if (s == "erf") return GeluMode::Erf;
  if (s == "tanh") return GeluMode::Tanh;
  throw ArgumentError("gelu mode must be 'erf' or 'tanh', got '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Budget-constrained ViT training core.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<IngestionError>(m, "IngestionError", PyExc_RuntimeError);

  // ---- numerics
  m.def("h_swish", [](const Array& x) { return to_array(h_swish(to_tensor(x))); }, py::arg("x"));
  m.def(
      "gelu", [](const Array& x, const std::string& mode) { return to_array(gelu(to_tensor(x), gelu_mode(mode))); },
      py::arg("x"), py::arg("mode") = "erf");
  m.def("softmax", [](const Array& x) { return to_array(softmax(to_tensor(x))); }, py::arg("x"));
  m.def(
      "linear",
      [](const Array& x, const Array& w, const Array& b) {
        return to_array(linear(to_tensor(x), to_tensor(w), to_tensor(b)));
      },
      py::arg("x"), py::arg("weight"), py::arg("bias"));
  m.def(
      "depthwise_conv3x3",
      [](const Array& x, const Array& k, const Array& b) {
        return to_array(depthwise_conv3x3(to_tensor(x), to_tensor(k), to_tensor(b)));
      },
      py::arg("x"), py::arg("kernel"), py::arg("bias"));
  m.def(
      "cross_entropy_ls",
      [](const Array& logits, const std::vector<int>& labels, double eps) {
        return cross_entropy_ls(to_tensor(logits), std::span<const int>(labels), eps);
      },
      py::arg("logits"), py::arg("labels"), py::arg("epsilon") = 0.1);

  // ---- token layout and interpolation
  m.def("seq2im", [](const Array& z) { return to_array(seq2im(to_tensor(z))); }, py::arg("tokens"));
  m.def("im2seq", [](const Array& g) { return to_array(im2seq(to_tensor(g))); }, py::arg("grid"));
  m.def("patchify", [](const Array& x, int p) { return to_array(patchify(to_tensor(x), p)); }, py::arg("images"),
        py::arg("patch_size"));
  m.def(
      "interpolate_embedding_rows",
      [](const Array& rows, int old_grid, int new_grid, bool cls) {
        return to_array(interpolate_embedding_rows(to_tensor(rows), old_grid, new_grid, cls));
      },
      py::arg("rows"), py::arg("old_grid"), py::arg("new_grid"), py::arg("has_class_token"));

  // ---- curriculum
  py::class_<ImageSizeSchedule>(m, "ImageSizeSchedule")
      .def(py::init([](int initial, int increment, int period, int final_size, int patch) {
             return ImageSizeSchedule(ScheduleSpec{initial, increment, period, final_size, patch});
           }),
           py::arg("initial_size") = 32, py::arg("increment") = 32, py::arg("period_epochs") = 5,
           py::arg("final_size") = 224, py::arg("patch_size") = 16)
      .def("size_for_epoch", &ImageSizeSchedule::size_for_epoch, py::arg("epoch"))
      .def("patches_for_epoch", &ImageSizeSchedule::patches_for_epoch, py::arg("epoch"))
      .def("saturation_epoch", &ImageSizeSchedule::saturation_epoch)
      .def(
          "transitions",
          [](const ImageSizeSchedule& s, int max_epochs) {
            py::list out;
            for (const auto& t : s.transitions(max_epochs)) {
              out.append(py::dict(py::arg("epoch") = t.epoch, py::arg("old_size") = t.old_size,
                                  py::arg("new_size") = t.new_size, py::arg("old_grid") = t.old_grid,
                                  py::arg("new_grid") = t.new_grid));
            }
            return out;
          },
          py::arg("max_epochs"));

  // ---- model
  m.def("ffn_param_count",
        [](std::size_t d, const std::string& kind) {
          if (kind != "locality" && kind != "plain") throw ArgumentError("ffn kind must be 'locality' or 'plain'");
          return ffn_param_count(d, kind == "locality" ? FfnKind::Locality : FfnKind::Plain);
        },
        py::arg("embed_dim"), py::arg("kind") = "locality");

  py::class_<VitModel<double>>(m, "VitModel")
      .def(py::init([](const std::string& ini, const std::vector<std::string>& overrides, std::uint64_t seed) {
             const RunConfig cfg = parse_run_config(ini, overrides, DataCheck::Skip);
             ModelConfig mc = cfg.model;
             mc.final_image_size = cfg.schedule.final_size;
             return VitModel<double>(mc, seed);
           }),
           py::arg("config_text") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("seed") = 0)
      .def_property_readonly("current_grid", &VitModel<double>::current_grid)
      .def_property_readonly("current_image_size", &VitModel<double>::current_image_size)
      .def("forward", [](const VitModel<double>& model, const Array& x) { return to_array(model.forward(to_tensor(x))); },
           py::arg("images"))
      .def("interpolate_pos_embed", &VitModel<double>::interpolate_pos_embed, py::arg("new_grid"))
      .def("param_count", [](const VitModel<double>& model) {
        const ParamCount pc = model.param_count();
        py::dict modules;
        for (const auto& [name, n] : pc.modules) modules[py::str(name)] = n;
        return py::make_tuple(pc.total, modules);
      });

  // ---- config
  m.def(
      "resolve_config",
      [](const std::string& path, const std::vector<std::string>& overrides) {
        return to_ini(load_run_config(path, overrides, DataCheck::SkipPaths));
      },
      py::arg("path"), py::arg("overrides") = std::vector<std::string>{});

  m.def(
      "read_metrics_csv",
      [](const std::filesystem::path& path) {
        py::list out;
        for (const auto& r : read_metrics_csv(path)) {
          out.append(py::dict(py::arg("epoch") = r.epoch, py::arg("wall_clock_s") = r.wall_clock_s,
                              py::arg("image_size") = r.image_size, py::arg("train_loss") = r.train_loss,
                              py::arg("val_top1") = r.val_top1, py::arg("steps") = r.steps));
        }
        return out;
      },
      py::arg("path"));

  m.def(
      "gradcheck",
      [](bool include_model) {
        auto ops = primitive_ops();
        if (include_model) {
          auto more = model_ops();
          ops.insert(ops.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
        }
        py::list out;
        for (const auto& r : run_grad_checks(ops)) out.append(py::make_tuple(r.op_name, r.max_rel_err, r.passed));
        return out;
      },
      py::arg("include_model") = false);

  // ---- commands: each returns (exit_code, stdout, stderr)
  m.def(
      "cmd_train",
      [](const std::string& config, const std::vector<std::string>& overrides, const std::string& run_dir,
         const std::string& resume) { return run_command(cli::cmd_train, cli::TrainArgs{config, overrides, run_dir, resume}); },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("run_dir") = "",
      py::arg("resume") = "");
  m.def(
      "cmd_eval",
      [](const std::string& ckpt, const std::string& data, int size) {
        return run_command(cli::cmd_eval, cli::EvalArgs{ckpt, data, size});
      },
      py::arg("checkpoint"), py::arg("data_path") = "", py::arg("eval_size") = 0);
  m.def(
      "cmd_schedule",
      [](const std::string& config, const std::vector<std::string>& overrides, int max_epochs) {
        return run_command(cli::cmd_schedule, cli::ScheduleArgs{config, overrides, max_epochs});
      },
      py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("max_epochs") = 31);
  m.def(
      "cmd_bench",
      [](const std::string& config, const std::vector<std::string>& overrides, const std::vector<int>& sizes,
         int steps, int batch) {
        return run_command(cli::cmd_bench, cli::BenchArgs{config, overrides, sizes, steps, batch});
      },
      py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
      py::arg("sizes") = std::vector<int>{}, py::arg("steps") = 5, py::arg("batch_size") = 8);
}
