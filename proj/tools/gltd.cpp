#include "gltd/cli.hpp"

int main(int argc, char** argv) { return gltd::run_cli(argc, argv); }
