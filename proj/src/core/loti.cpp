#include "cehr/codec.hpp"
#include "cehr/error.hpp"

namespace cehr::codec {

double loti(const AttScheme& scheme, const IntervalDistribution& dist) {
  const auto n = dist.total();
  if (n == 0) fail(ErrorCode::InvalidArgument, "LOTI of an empty interval distribution");
  double loss = 0.0;
  for (auto& [days, count] : dist.between) {
    auto tok = scheme.encode(days, IntervalContext::BetweenVisit);
    const std::int64_t kept = tok ? scheme.decode(*tok) : 0;
    loss += double(days - kept) * double(count);
  }
  for (auto& [days, count] : dist.within) {
    std::int64_t kept = 0;
    if (scheme.has_inpatient_map()) kept = scheme.decode(*scheme.encode(days, IntervalContext::WithinInpatient));
    loss += double(days - kept) * double(count);
  }
  return loss / double(n);
}

}  // namespace cehr::codec
