#include "auvtrack/cli.hpp"
#include "auvtrack/runtime.hpp"

int main(int argc, char** argv) {
    auvtrack::tune_allocator();
    return auvtrack::run_cli(argc, argv);
}
