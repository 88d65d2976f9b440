#include "grad_cases.hpp"

#include "pixmamba/metrics.hpp"
#include "pixmamba/model.hpp"
#include "pixmamba/ops.hpp"
#include "pixmamba/ssm.hpp"
#include "pixmamba/vision_scan.hpp"
#include "test_util.hpp"

namespace pixmamba::testing {

namespace {

using Td = Tensor<double>;

// sum(out * w) with a fixed random w, so every output element matters.
Td weighted(const Td& out, Rng& rng) {
    return sum(out * random_tensor(out.shape(), rng));
}

template <typename Fn>
GradCase unary_case(std::string name, Fn fn, double lo = -2.0, double hi = 2.0) {
    return {std::move(name), [fn, lo, hi](std::uint64_t seed) {
                Rng rng(seed);
                auto x = random_tensor({2, 3, 4}, rng, lo, hi);
                auto w = random_tensor(fn(x).shape(), rng);
                return GradProblem{{x}, [fn, x, w] { return sum(fn(x) * w); }};
            }};
}

std::vector<GradCase> build_cases() {
    std::vector<GradCase> cases;

    cases.push_back({"add_broadcast", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = random_tensor({2, 3, 4}, rng);
                         auto b = random_tensor({3, 1}, rng);
                         auto w = random_tensor({2, 3, 4}, rng);
                         return GradProblem{{a, b}, [a, b, w] { return sum((a + b) * w); }};
                     }});
    cases.push_back({"sub_broadcast", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = random_tensor({2, 1, 4}, rng);
                         auto b = random_tensor({2, 3, 4}, rng);
                         auto w = random_tensor({2, 3, 4}, rng);
                         return GradProblem{{a, b}, [a, b, w] { return sum((a - b) * w); }};
                     }});
    cases.push_back({"mul_broadcast", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = random_tensor({2, 3, 4}, rng);
                         auto b = random_tensor({4}, rng);
                         auto w = random_tensor({2, 3, 4}, rng);
                         return GradProblem{{a, b}, [a, b, w] { return sum((a * b) * w); }};
                     }});
    cases.push_back(unary_case("add_scalar", [](const Td& x) { return add_scalar(x, 0.7); }));
    cases.push_back(unary_case("mul_scalar", [](const Td& x) { return mul_scalar(x, -1.3); }));
    cases.push_back(unary_case("neg", [](const Td& x) { return neg(x); }));
    cases.push_back(unary_case("exp", [](const Td& x) { return exp(x); }));
    cases.push_back(unary_case("sqrt", [](const Td& x) { return sqrt(x); }, 0.2, 3.0));
    cases.push_back(unary_case("square", [](const Td& x) { return square(x); }));
    cases.push_back(unary_case("sigmoid", [](const Td& x) { return sigmoid(x); }));
    cases.push_back(unary_case("silu", [](const Td& x) { return silu(x); }));
    cases.push_back(unary_case("softplus", [](const Td& x) { return softplus(x); }));
    cases.push_back(unary_case("sum", [](const Td& x) { return sum(square(x)); }));
    cases.push_back(unary_case("mean", [](const Td& x) { return mean(square(x)); }));
    cases.push_back(unary_case("reduce_sum", [](const Td& x) { return reduce_sum(x, {0, 2}, true); }));
    cases.push_back(unary_case("reduce_mean", [](const Td& x) { return reduce_mean(x, {1}); }));
    cases.push_back(unary_case("reshape", [](const Td& x) { return square(reshape(x, {4, 6})); }));
    cases.push_back(unary_case("permute", [](const Td& x) { return square(permute(x, {2, 0, 1})); }));
    cases.push_back(unary_case("narrow", [](const Td& x) { return square(narrow(x, 2, 1, 2)); }));

    cases.push_back({"matmul_batched", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = random_tensor({2, 3, 4}, rng);
                         auto b = random_tensor({2, 4, 5}, rng);
                         return GradProblem{{a, b}, [a, b, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(matmul(a, b), r);
                                            }};
                     }});
    cases.push_back({"matmul_shared", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto a = random_tensor({2, 3, 4}, rng);
                         auto b = random_tensor({4, 5}, rng);
                         return GradProblem{{a, b}, [a, b, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(matmul(a, b), r);
                                            }};
                     }});
    cases.push_back({"linear", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({2, 3, 4}, rng);
                         auto w = random_tensor({4, 5}, rng);
                         auto b = random_tensor({5}, rng);
                         return GradProblem{{x, w, b}, [x, w, b, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(linear(x, w, b), r);
                                            }};
                     }});
    cases.push_back({"layer_norm", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({3, 6}, rng, -2, 2);
                         auto g = random_tensor({6}, rng, 0.5, 1.5);
                         auto b = random_tensor({6}, rng);
                         return GradProblem{{x, g, b}, [x, g, b, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(layer_norm(x, g, b, 1e-5), r);
                                            }};
                     }});
    cases.push_back({"conv2d_stride_pad", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({2, 2, 5, 5}, rng);
                         auto w = random_tensor({3, 2, 3, 3}, rng);
                         auto b = random_tensor({3}, rng);
                         return GradProblem{{x, w, b}, [x, w, b, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(conv2d(x, w, b, Conv2dOptions{2, 1, 1}), r);
                                            }};
                     }});
    cases.push_back({"conv2d_depthwise", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({1, 4, 4, 4}, rng);
                         auto w = random_tensor({4, 1, 3, 3}, rng);
                         auto b = random_tensor({4}, rng);
                         return GradProblem{{x, w, b}, [x, w, b, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(conv2d(x, w, b, Conv2dOptions{1, 1, 4}), r);
                                            }};
                     }});
    cases.push_back({"transpose_conv2d", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({2, 3, 3, 3}, rng);
                         auto w = random_tensor({3, 2, 2, 2}, rng);
                         auto b = random_tensor({2}, rng);
                         return GradProblem{{x, w, b}, [x, w, b, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(transpose_conv2d(x, w, b, 2), r);
                                            }};
                     }});
    cases.push_back({"causal_conv1d", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({2, 6, 3}, rng);
                         auto w = random_tensor({3, 4}, rng);
                         auto b = random_tensor({3}, rng);
                         return GradProblem{{x, w, b}, [x, w, b, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(causal_conv1d(x, w, b), r);
                                            }};
                     }});
    cases.push_back(unary_case("global_avg_pool2d", [](const Td& x) {
        return square(global_avg_pool2d(reshape(x, {1, 2, 3, 4})));
    }));
    cases.push_back({"bilinear_upsample", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto x = random_tensor({1, 2, 3, 2}, rng);
                         return GradProblem{{x}, [x, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(bilinear_upsample(x, 7, 5), r);
                                            }};
                     }});
    for (auto dir : default_directions(4)) {
        cases.push_back({"scan_flatten_" + to_string(dir), [dir](std::uint64_t seed) {
                             Rng rng(seed);
                             auto x = random_tensor({1, 2, 3, 4}, rng);
                             return GradProblem{{x}, [x, dir, rng]() mutable {
                                                    Rng r = rng;
                                                    auto seq = scan_flatten(x, dir);
                                                    return weighted(scan_unflatten(square(seq), 3, 4, dir), r);
                                                }};
                         }});
    }
    cases.push_back({"bpe_sample", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto bpe = random_tensor({4, 3}, rng);
                         return GradProblem{{bpe}, [bpe, rng]() mutable {
                                                Rng r = rng;
                                                return weighted(bpe_sample(bpe, 4, 4, 2), r);
                                            }};
                     }});
    cases.push_back({"charbonnier", [](std::uint64_t seed) {
                         Rng rng(seed);
                         auto p = random_tensor({1, 3, 4, 4}, rng, 0, 1);
                         auto t = random_tensor({1, 3, 4, 4}, rng, 0, 1);
                         t.mutable_data()[5] = p.data()[5];
                         return GradProblem{{p, t}, [p, t] { return metrics::charbonnier(p, t, 1e-3); }, 1e-6};
                     }});

    for (auto algo : {ssm::ScanAlgorithm::Sequential, ssm::ScanAlgorithm::Parallel}) {
        for (auto mode : {ssm::Discretization::Zoh, ssm::Discretization::Euler}) {
            std::string name = std::string("selective_scan_") +
                               (algo == ssm::ScanAlgorithm::Sequential ? "sequential" : "parallel") +
                               (mode == ssm::Discretization::Zoh ? "_zoh" : "_euler");
            cases.push_back({name, [algo, mode](std::uint64_t seed) {
                                 Rng rng(seed);
                                 auto in = random_scan_input(2, 5, 3, 4, rng);
                                 auto w = random_tensor({2, 5, 3}, rng);
                                 return GradProblem{{in.x, in.delta, in.A, in.Bmat, in.Cmat, in.D}, [in, w, algo, mode] {
                                                        auto y = ssm::selective_scan(in.x, in.delta, in.A, in.Bmat,
                                                                                     in.Cmat, in.D, algo, mode);
                                                        return sum(y * w);
                                                    }};
                             }});
        }
    }

    cases.push_back({"selective_ssm_module", [](std::uint64_t seed) {
                         Rng rng(seed);
                         ParameterRegistry<double> reg;
                         Rng init(seed + 17);
                         auto m = std::make_shared<SelectiveSsm<double>>(ParamFactory<double>(reg, init), 4, 3,
                                                                         ssm::Discretization::Zoh,
                                                                         ssm::ScanAlgorithm::Sequential);
                         // Step sizes of order one.
                         auto bias = m->dt_proj.bias;
                         for (auto& v : bias.mutable_data()) v = rng.uniform(-0.5, 1.0);
                         auto x = random_tensor({1, 6, 4}, rng);
                         auto w = random_tensor({1, 6, 4}, rng);
                         return GradProblem{{x, m->A_log, m->dt_proj.bias, m->x_proj.weight},
                                            [m, x, w] { return sum((*m)(x) * w); }};
                     }});
    cases.push_back({"emb_block", [](std::uint64_t seed) {
                         Rng rng(seed);
                         ParameterRegistry<double> reg;
                         Rng init(seed + 23);
                         EmbConfig cfg;
                         cfg.dim = 4;
                         cfg.d_state = 3;
                         auto m = std::make_shared<EmbBlock<double>>(ParamFactory<double>(reg, init), cfg);
                         auto scale = m->proj_out.weight;
                         for (auto& v : scale.mutable_data()) v *= 20.0;
                         auto x = random_tensor({1, 4, 3, 3}, rng);
                         auto w = random_tensor({1, 4, 3, 3}, rng);
                         return GradProblem{{x, m->proj_out.weight, m->ess2d.attention.fc1.weight},
                                            [m, x, w] { return sum((*m)(x) * w); }};
                     }});
    cases.push_back({"mub_block", [](std::uint64_t seed) {
                         Rng rng(seed);
                         ParameterRegistry<double> reg;
                         Rng init(seed + 29);
                         EmbConfig cfg;
                         cfg.dim = 4;
                         cfg.d_state = 2;
                         auto m = std::make_shared<MubBlock<double>>(ParamFactory<double>(reg, init), cfg);
                         auto x = random_tensor({1, 4, 3, 3}, rng);
                         auto w = random_tensor({1, 2, 6, 6}, rng);
                         return GradProblem{{x, m->up.weight}, [m, x, w] { return sum((*m)(x) * w); }, 1e-3};
                     }});
    cases.push_back({"pixmamba_model", [](std::uint64_t seed) {
                         Rng rng(seed);
                         ModelConfig cfg;
                         cfg.image_height = cfg.image_width = 8;
                         cfg.patch_size = 2;
                         cfg.base_dim = 4;
                         cfg.encoder_depths = {1, 1, 1};
                         cfg.decoder_depths = {1, 1, 1};
                         cfg.pixnet_layers = 1;
                         cfg.pixnet_dim = 4;
                         cfg.bpe_block = 4;
                         cfg.d_state = 2;
                         auto m = std::make_shared<PixMamba<double>>(cfg, seed + 31);
                         auto x = random_tensor({1, 3, 8, 8}, rng, 0, 1);
                         auto w = random_tensor({1, 3, 8, 8}, rng);
                         auto bpe = m->parameters().at("pixnet.bpe");
                         return GradProblem{{x, bpe}, [m, x, w] { return sum(m->forward(x) * w); }};
                     }});
    return cases;
}

}  // namespace

const std::vector<GradCase>& gradient_cases() {
    static const std::vector<GradCase> cases = build_cases();
    return cases;
}

GradcheckResult run_case(const GradCase& c, std::uint64_t seed) {
    auto problem = c.make(seed);
    return gradcheck(problem.loss, problem.inputs, problem.step);
}

}  // namespace pixmamba::testing
