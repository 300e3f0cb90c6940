#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "auvtrack/runtime.hpp"

#include <spdlog/spdlog.h>

int main(int argc, char** argv) {
    auvtrack::tune_allocator();
    spdlog::set_level(spdlog::level::warn);
    doctest::Context ctx(argc, argv);
    return ctx.run();
}
