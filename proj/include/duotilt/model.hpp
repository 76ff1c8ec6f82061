#pragma once

#include <concepts>
#include <vector>

#include "duotilt/link.hpp"
#include "duotilt/rng.hpp"
#include "duotilt/types.hpp"

namespace duotilt {

/**
 * @brief Interface every Markov random walk model provides.
 *
 * Conventions: theta has incr_dim() entries, eta has link.dim entries.
 * psi(x, x', 0) = 0, phi(x, 0) = 0 and k(x, x', 0) = 0 must hold exactly.
 * The add_* members accumulate into the supplied output.
 */
template <class M>
concept MarkovRandomWalk = requires(const M& m, const typename M::State& x,
                                    const LinkFunction<typename M::State>& link,
                                    const VectorXd& v, Rng& rng, const IncVec& sum,
                                    Eigen::Ref<VectorXd> g, Eigen::Ref<MatrixXd> h,
                                    const TiltParams& tilt) {
  typename M::State;
  { m.state_dim() } -> std::convertible_to<int>;
  { m.incr_dim() } -> std::convertible_to<int>;
  { m.default_link() } -> std::same_as<LinkFunction<typename M::State>>;
  { m.check_link(link) };
  { m.in_domain(link, tilt) } -> std::convertible_to<bool>;
  { m.initial_state(rng) } -> std::same_as<typename M::State>;
  { m.is_absorbing(x) } -> std::convertible_to<bool>;
  { m.observe(x, sum) } -> std::same_as<IncVec>;
  { m.sample_transition(x, link, v, rng) } -> std::same_as<typename M::State>;
  { m.sample_increment(x, x, v, rng) } -> std::same_as<IncVec>;
  { m.psi(x, x, v) } -> std::convertible_to<double>;
  { m.add_dpsi(x, x, v, g) };
  { m.add_d2psi(x, x, v, h) };
  { m.link_value(x, x, link, v) } -> std::convertible_to<double>;
  { m.add_dlink(x, x, link, v, g) };
  { m.phi(x, link, v) } -> std::convertible_to<double>;
  { m.add_dphi(x, link, v, g) };
  { m.add_d2phi(x, link, v, h) };
  { m.state_vector(x) } -> std::same_as<std::vector<double>>;
};

}  // namespace duotilt
