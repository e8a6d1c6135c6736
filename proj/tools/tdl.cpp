#include "tdl/cli.hpp"

int main(int argc, char** argv) { return tdl::cli::dispatch(argc, argv); }
