#ifndef HMMVT_VERSION_HPP
#define HMMVT_VERSION_HPP

namespace hmmvt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hmmvt

#endif  // HMMVT_VERSION_HPP
