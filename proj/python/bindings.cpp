#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tflpi/charts.hpp"
#include "tflpi/ltflpi.hpp"
#include "tflpi/sim.hpp"
#include "tflpi/sysmodel.hpp"

namespace py = pybind11;
using namespace tflpi;

namespace {

py::object json_to_py(const nlohmann::json& j) {
    switch (j.type()) {
        case nlohmann::json::value_t::null: return py::none();
        case nlohmann::json::value_t::boolean: return py::bool_(j.get<bool>());
        case nlohmann::json::value_t::number_integer: return py::int_(j.get<long>());
        case nlohmann::json::value_t::number_unsigned: return py::int_(j.get<unsigned long>());
        case nlohmann::json::value_t::number_float: return py::float_(j.get<double>());
        case nlohmann::json::value_t::string: return py::str(j.get<std::string>());
        case nlohmann::json::value_t::array: {
            py::list out;
            for (const auto& item : j) out.append(json_to_py(item));
            return out;
        }
        case nlohmann::json::value_t::object: {
            py::dict out;
            for (auto it = j.begin(); it != j.end(); ++it)
                out[py::str(it.key())] = json_to_py(it.value());
            return out;
        }
        default: return py::none();
    }
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<int>(v.size()));
}

}  // namespace

PYBIND11_MODULE(_tflpi, m) {
    m.doc() = "observable transverse outputs, normal forms and output-feedback "
              "set stabilization for single-input control-affine systems";

    py::register_exception<Error>(m, "TflpiError");

    py::class_<VarTable>(m, "VarTable")
        .def(py::init<std::vector<std::string>>())
        .def("__len__", &VarTable::size)
        .def("names", &VarTable::names);

    py::class_<Expr>(m, "Expr")
        .def("eval",
             [](const Expr& e, const std::vector<double>& x) {
                 return e.eval(std::span<const double>(x.data(), x.size()));
             })
        .def("diff", [](const Expr& e, std::size_t i) { return e.diff(i); })
        .def("simplified", &Expr::simplified)
        .def("text", [](const Expr& e, const VarTable& vars) { return e.str(vars); });

    m.def("parse", &parse_expr, py::arg("text"), py::arg("vars"));

    py::class_<VectorField>(m, "VectorField")
        .def(py::init([](const VarTable& vars, const std::vector<std::string>& comps) {
                 VectorField f{vars, {}};
                 for (const auto& c : comps) f.comps.push_back(parse_expr(c, vars));
                 return f;
             }),
             py::arg("vars"), py::arg("components"))
        .def("eval", &VectorField::eval)
        .def("text", [](const VectorField& f) {
            std::vector<std::string> out;
            for (const auto& c : f.comps) out.push_back(c.str(f.vars));
            return out;
        });

    m.def("lie_derivative", &lie_derivative);
    m.def("lie_bracket", &lie_bracket);
    m.def("ad_iterates", &ad_iterates, py::arg("f"), py::arg("g"), py::arg("k"));

    py::class_<ControlSystem>(m, "ControlSystem")
        .def_property_readonly("n", &ControlSystem::n)
        .def_property_readonly("p", &ControlSystem::p)
        .def_readonly("vars", &ControlSystem::vars)
        .def("drift", &ControlSystem::drift)
        .def("input_field", &ControlSystem::input_field);

    py::class_<TargetSet>(m, "TargetSet")
        .def_readonly("nstar", &TargetSet::nstar)
        .def_readonly("x0", &TargetSet::x0)
        .def("gamma", &TargetSet::gamma_eval);

    py::class_<SystemBundle>(m, "SystemBundle")
        .def_readonly("sys", &SystemBundle::sys)
        .def_readonly("target", &SystemBundle::target)
        .def_property_readonly("lambda_expr", [](const SystemBundle& b) {
            return b.lambda ? py::cast(*b.lambda) : py::none().cast<py::object>();
        });

    m.def("load_system", &load_system, py::arg("text"));
    m.def("load_system_file", &load_system_file, py::arg("path"));
    m.def("parse_output_function", &parse_output_function, py::arg("text"), py::arg("sys"));

    py::class_<SampleConfig>(m, "SampleConfig")
        .def(py::init<>())
        .def_readwrite("count", &SampleConfig::count)
        .def_readwrite("radius", &SampleConfig::radius)
        .def_readwrite("tol_rank", &SampleConfig::tol_rank)
        .def_readwrite("tol_zero", &SampleConfig::tol_zero);

    m.def(
        "validate",
        [](const ControlSystem& sys, const TargetSet& tset, const SampleConfig& cfg) {
            return json_to_py(validate(sys, tset, cfg).to_json());
        },
        py::arg("sys"), py::arg("target"), py::arg("cfg") = SampleConfig{});

    m.def("tangent_space", [](const TargetSet& tset, const Eigen::VectorXd& x) {
        return tangent_space(tset, x).vectors;
    });
    m.def("project_to_set", &project_to_set, py::arg("target"), py::arg("x_guess"));
    m.def("sample_on_set", &sample_on_set, py::arg("target"), py::arg("radius"), py::arg("count"));
    m.def("invariance_check", &invariance_check);

    m.def(
        "check_ltflpi",
        [](const ControlSystem& sys, const TargetSet& tset, const SampleConfig& cfg) {
            return json_to_py(check_ltflpi(sys, tset, cfg).report.to_json());
        },
        py::arg("sys"), py::arg("target"), py::arg("cfg") = SampleConfig{});

    m.def(
        "check_gtflpi",
        [](const ControlSystem& sys, const TargetSet& tset,
           const std::vector<Eigen::VectorXd>& grid, bool cylinder, const SampleConfig& cfg) {
            return json_to_py(check_gtflpi(sys, tset, grid, cylinder, cfg).to_json());
        },
        py::arg("sys"), py::arg("target"), py::arg("grid"), py::arg("cylinder_attested") = false,
        py::arg("cfg") = SampleConfig{});

    m.def(
        "relative_degree",
        [](const Expr& lambda, const ControlSystem& sys, const TargetSet& tset,
           const SampleConfig& cfg) {
            const auto ball = halton_ball(tset.x0, cfg.radius, cfg.count);
            return json_to_py(
                relative_degree(lambda, sys, tset.x0, sys.n(), ball, cfg.tol_zero).to_json());
        },
        py::arg("lambda_expr"), py::arg("sys"), py::arg("target"), py::arg("cfg") = SampleConfig{});

    m.def(
        "zero_dynamics_coincidence",
        [](const Expr& lambda, int r, const ControlSystem& sys, const TargetSet& tset,
           const SampleConfig& cfg) {
            const auto samples = sample_on_set(tset, cfg.radius, cfg.count);
            return json_to_py(
                zero_dynamics_coincidence(lambda, r, sys, tset, samples, cfg.tol_zero).to_json());
        },
        py::arg("lambda_expr"), py::arg("r"), py::arg("sys"), py::arg("target"),
        py::arg("cfg") = SampleConfig{});

    m.def(
        "observability_factorization",
        [](const Expr& lambda, const ControlSystem& sys, const TargetSet& tset,
           const SampleConfig& cfg) {
            const auto samples = sample_on_set(tset, cfg.radius, cfg.count);
            return json_to_py(
                observability_factorization(lambda, sys, samples, cfg.tol_zero).to_json());
        },
        py::arg("lambda_expr"), py::arg("sys"), py::arg("target"), py::arg("cfg") = SampleConfig{});

    m.def(
        "check_commuting",
        [](const ControlSystem& sys, int num_fields) {
            return json_to_py(check_commuting(sys, num_fields).to_json());
        },
        py::arg("sys"), py::arg("num_fields"));

    py::class_<ChartResult>(m, "ChartResult")
        .def("forward", &ChartResult::forward)
        .def("invert", &ChartResult::invert)
        .def("lam", &ChartResult::lambda)
        .def_readonly("validity_radius", &ChartResult::validity_radius)
        .def_property_readonly("verification",
                               [](const ChartResult& c) { return json_to_py(c.verification.to_json()); })
        .def_property_readonly("info", [](const ChartResult& c) { return json_to_py(c.to_json()); });

    m.def(
        "construct_chart",
        [](const ControlSystem& sys, const TargetSet& tset, const SampleConfig& cfg,
           double radius) { return construct_chart(sys, tset, cfg, radius); },
        py::arg("sys"), py::arg("target"), py::arg("cfg") = SampleConfig{},
        py::arg("radius") = 0.05);

    py::class_<NormalForm>(m, "NormalForm")
        .def_readonly("r", &NormalForm::r)
        .def_readonly("xi_chain", &NormalForm::xi_chain)
        .def_readonly("a1", &NormalForm::a1)
        .def_readonly("a2", &NormalForm::a2)
        .def("info", [](const NormalForm& nf, const VarTable& vars) {
            return json_to_py(nf.to_json(vars));
        });

    m.def(
        "normal_form",
        [](const Expr& lambda, const ControlSystem& sys, const TargetSet& tset,
           const SampleConfig& cfg) { return normal_form(lambda, sys, tset, cfg); },
        py::arg("lambda_expr"), py::arg("sys"), py::arg("target"), py::arg("cfg") = SampleConfig{});

    py::class_<Trajectory>(m, "Trajectory")
        .def_readonly("t", &Trajectory::t)
        .def_readonly("x", &Trajectory::x)
        .def_readonly("xi_hat", &Trajectory::xi_hat)
        .def_readonly("u", &Trajectory::u)
        .def_readonly("transverse_norm", &Trajectory::transverse_norm)
        .def_readonly("gamma_norm", &Trajectory::gamma_norm)
        .def_readonly("blowup", &Trajectory::blowup)
        .def_readonly("sat_events", &Trajectory::sat_events)
        .def_property_readonly("summary",
                               [](const Trajectory& t) { return json_to_py(t.summary_json()); });

    m.def(
        "simulate",
        [](const ControlSystem& sys, const TargetSet& tset, const NormalForm& nf, double eps,
           const std::vector<double>& alpha, const std::vector<double>& k,
           const std::string& phi0, double sat, const Eigen::VectorXd& x_init, double T,
           double stride) {
            ObserverConfig obs;
            obs.r = nf.r;
            obs.eps = eps;
            obs.alpha = to_vector(alpha);
            obs.k = to_vector(k);
            obs.phi0 = parse_expr(phi0, ObserverConfig::xi_vars(nf.r));
            obs.sat = sat;
            return simulate_closed_loop(sys, tset, nf.xi_chain, obs, x_init,
                                        Eigen::VectorXd::Zero(nf.r), T, stride);
        },
        py::arg("sys"), py::arg("target"), py::arg("normal_form"), py::arg("eps"),
        py::arg("alpha"), py::arg("k"), py::arg("phi0"), py::arg("sat"), py::arg("x_init"),
        py::arg("T"), py::arg("stride") = 0.01);
}
