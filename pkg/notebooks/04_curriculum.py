"""
A curriculum run
================

The executor solves each task with the current library and the curator
decides which candidate programs to keep.
"""

from repemp import data_path, load_scenario
from repemp.runner import dumps_report, run_scenario

sc = load_scenario(data_path("curriculum.toml"))
print("initial:", sc.library("initial").ids if "initial" in sc.libraries else sc.initial)

report = run_scenario(sc)
for step in report["steps"]:
    ep = step["episode"]
    print(f"task {step['task']}: reward {ep['reward']:.2f} in {ep['action_count']} actions; "
          f"candidates {step['candidates']} -> kept {step['retained']}; "
          f"curator: {step['action']['kind']} -> {step['library']}")

print("final library:", [p["id"] for p in report["final_library"]["programs"]])

# %%
# The report is plain JSON with sorted keys, so two runs can be diffed
# byte for byte.

assert dumps_report(run_scenario(sc)) == dumps_report(report)
