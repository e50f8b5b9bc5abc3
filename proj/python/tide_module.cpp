// pybind11 bindings over the core: schedule, codecs, scene generation,
// metrics, gradient checks, and checkpoint-level train/sample drivers.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tide/eval.hpp"
#include "tide/gradcheck_units.hpp"
#include "tide/sample.hpp"
#include "tide/train.hpp"

namespace py = pybind11;
using namespace tide;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int64_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = a.shape(i);
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

RunConfig config_from_dict(const std::map<std::string, std::string>& kv) {
    RunConfig c;
    config_apply(c, kv);
    return c;
}

std::vector<scenes::Quadruple> procedural(uint64_t seed, int count, const scenes::Grammar& g) {
    std::vector<scenes::Quadruple> data;
    data.reserve(count);
    for (int i = 0; i < count; ++i) data.push_back(scenes::generate_scene(mix_keys(seed, 77u, i), g));
    return data;
}

}  // namespace

PYBIND11_MODULE(_tide, m) {
    m.doc() = "tri-branch joint diffusion over image/depth/mask";

    // ---- schedule ----
    py::class_<schedule::NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("T", &schedule::NoiseSchedule::T)
        .def("beta", &schedule::NoiseSchedule::beta)
        .def("alpha", &schedule::NoiseSchedule::alpha)
        .def("alpha_bar", &schedule::NoiseSchedule::alpha_bar);
    m.def("make_linear_schedule", &schedule::make_linear_schedule, py::arg("T"), py::arg("beta_start"),
          py::arg("beta_end"));
    m.def("q_sample", [](py::array_t<double> z0, int t, py::array_t<double> eps, const schedule::NoiseSchedule& s) {
        return array_from_tensor(schedule::q_sample(tensor_from_array(z0), t, tensor_from_array(eps), s));
    });
    m.def("ddpm_step",
          [](py::array_t<double> z_t, py::array_t<double> eps_hat, int t, const schedule::NoiseSchedule& s,
             py::array_t<double> noise) {
              return array_from_tensor(
                  schedule::ddpm_step(tensor_from_array(z_t), tensor_from_array(eps_hat), t, s, tensor_from_array(noise)));
          });

    // ---- codec ----
    m.def("encode_mask", [](py::array_t<double> mask) {
        return array_from_tensor(codec::encode_mask(tensor_from_array(mask), codec::default_palette()));
    });
    m.def("decode_mask", [](py::array_t<double> grid) {
        return array_from_tensor(codec::decode_mask(tensor_from_array(grid), codec::default_palette()));
    });
    m.def("encode_depth", [](py::array_t<double> d) { return array_from_tensor(codec::encode_depth(tensor_from_array(d))); });
    m.def("decode_depth", [](py::array_t<double> g) { return array_from_tensor(codec::decode_depth(tensor_from_array(g))); });
    m.def("palette_names", [] { return codec::default_palette().names; });

    // ---- scenes ----
    m.def("generate_scene", [](uint64_t seed) {
        scenes::Grammar g;
        auto q = scenes::generate_scene(seed, g);
        return py::make_tuple(array_from_tensor(q.image), array_from_tensor(q.depth), array_from_tensor(q.mask), q.caption);
    });
    m.def("validate_scene",
          [](py::array_t<double> image, py::array_t<double> depth, py::array_t<double> mask, const std::string& caption) {
              scenes::Grammar g;
              scenes::Quadruple q{tensor_from_array(image), tensor_from_array(depth), tensor_from_array(mask), caption};
              return scenes::validate_quadruple(q, g);
          });
    m.def("write_dataset", [](uint64_t seed, int count, const std::string& dir) {
        scenes::Grammar g;
        scenes::write_dataset(procedural(seed, count, g), dir, g.depth_rule);
    });

    // ---- metrics ----
    m.def("depth_metrics", [](py::array_t<double> pred, py::array_t<double> gt, bool median_align) {
        Tensor p = tensor_from_array(pred);
        auto dm = eval::depth_metrics(p, tensor_from_array(gt), eval::all_valid(p), median_align);
        py::dict d;
        d["si_log"] = dm.si_log;
        d["a_rel"] = dm.a_rel;
        d["log10"] = dm.log10;
        d["rmse"] = dm.rmse;
        d["s_rel"] = dm.s_rel;
        d["rmse_log"] = dm.rmse_log;
        d["delta1"] = dm.delta1;
        d["delta2"] = dm.delta2;
        d["delta3"] = dm.delta3;
        return d;
    }, py::arg("pred"), py::arg("gt"), py::arg("median_align") = false);
    m.def("miou", [](py::array_t<double> pred, py::array_t<double> gt, int K) {
        return eval::miou(tensor_from_array(pred), tensor_from_array(gt), K).mean;
    });
    m.def("spearman", [](const std::vector<double>& a, const std::vector<double>& b) -> py::object {
        auto r = eval::spearman(a, b);
        return r ? py::cast(*r) : py::none();
    });
    m.def("consistency", [](py::array_t<double> image, py::array_t<double> depth, py::array_t<double> mask) {
        scenes::Grammar g;
        auto rep = eval::consistency_report(tensor_from_array(image), tensor_from_array(depth), tensor_from_array(mask),
                                            g.palette, g.depth_rule);
        py::dict d;
        d["mask_image_agreement"] = rep.mask_image_agreement;
        d["depth_mask_agreement"] = rep.depth_mask_agreement ? py::cast(*rep.depth_mask_agreement) : py::none();
        d["degenerate_mask"] = rep.degenerate_mask;
        return d;
    });

    // ---- gradient checks ----
    m.def("gradcheck_units", &gradcheck::all_units);
    m.def("gradcheck", [](const std::string& unit, double tol) {
        auto rep = gradcheck::run_unit(unit, tol);
        py::dict d;
        d["unit"] = rep.unit;
        d["max_rel_err"] = rep.max_rel_err;
        d["checked"] = rep.checked;
        d["pass"] = rep.pass;
        d["worst_param"] = rep.worst_param;
        return d;
    }, py::arg("unit"), py::arg("tol") = 1e-4);

    // ---- training / sampling drivers (checkpoint-level, mirroring the CLI) ----
    m.def("pretrain", [](const std::map<std::string, std::string>& config, const std::string& out, int n_data) {
        RunConfig cfg = config_from_dict(config);
        scenes::Grammar g;
        g.height = cfg.model.height;
        g.width = cfg.model.width;
        std::ostringstream sink;
        return train::pretrain(cfg, procedural(cfg.seed, n_data, g), out, sink).string();
    }, py::arg("config"), py::arg("out"), py::arg("n_data") = 32);
    m.def("train", [](const std::map<std::string, std::string>& config, const std::string& init, const std::string& out,
                      int n_data) {
        RunConfig cfg = config_from_dict(config);
        auto a = train::load_stage_a(init);
        cfg.model = a.cfg.model;
        scenes::Grammar g;
        g.height = cfg.model.height;
        g.width = cfg.model.width;
        auto m2 = train::build_stage_b(a, cfg);
        std::ostringstream sink;
        return train::train_stage_b(m2, cfg, procedural(cfg.seed, n_data, g), g.palette, out, 0, nullptr, {}, sink).string();
    }, py::arg("config"), py::arg("init"), py::arg("out"), py::arg("n_data") = 32);
    m.def("sample", [](const std::string& checkpoint, const std::string& caption, uint64_t seed, int steps) {
        auto st = train::load_stage_b(checkpoint);
        auto sched = schedule::make_linear_schedule(st.cfg.T, st.cfg.beta_start, st.cfg.beta_end);
        if (steps <= 0) steps = st.cfg.sample_steps;
        auto tr = sample::sample_triple(caption, steps, seed, st.model, sched, {st.cfg.ils, st.cfg.tan});
        return py::make_tuple(array_from_tensor(tr.image), array_from_tensor(tr.depth), array_from_tensor(tr.mask));
    }, py::arg("checkpoint"), py::arg("caption"), py::arg("seed") = 0, py::arg("steps") = 0);

    m.def("default_config", [] { return config_to_map(RunConfig{}); });
}
