#include "mvcn/cli.hpp"

int main(int argc, char** argv) { return mvcn::cli_dispatch(argc, argv); }
