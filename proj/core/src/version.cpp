#include "csqc/version.hpp"

namespace csqc {

std::string_view version() { return CSQC_VERSION_STRING; }

}  // namespace csqc
