from semver import VersionInfo

program_name = "BonForge"
program_url = "https://github.com/bonforge/bonforge"
__version__ = VersionInfo.parse("0.3.0")

# stamped into every emitted artifact, readers reject a different major version
FORMAT_VERSION = VersionInfo.parse("1.0.0")
