#include "farm/error.hpp"

namespace farm {

int exit_code(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::config: return 2;
        case ErrorKind::data: return 3;
        case ErrorKind::numerical: return 4;
        case ErrorKind::usage: return 2;
    }
    return 1;
}

}  // namespace farm
