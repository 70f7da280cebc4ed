#ifndef DAR_CORE_VENDOR_JSON_HPP
#define DAR_CORE_VENDOR_JSON_HPP

// nlohmann/json emits deprecation-adjacent warnings under -Wextra on some
// compilers; funnel the include through one place.
#include <json.hpp>

#endif
