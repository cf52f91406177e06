#include <gsid/cli.hpp>

int main(int argc, char** argv)
{
    return gsid::cli::run_cli(argc, argv);
}
