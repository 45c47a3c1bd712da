"""Drive the line-following track with the built-in reference controller.

The track is a straight-curve-straight ribbon. The state the agent sees
is an 18-dim vector of pose errors, speed, and lookahead geometry; the
reference controller is a pure-pursuit steering law plus a speed rule.
"""

from rfrlf.envs import make_env
from rfrlf.expertgen import default_controller

env = make_env("linetrack")
drive = default_controller(env)

state = env.reset(seed=7)
total_progress = 0.0
for step in range(1000):
    result = env.step(drive(env, state))
    state = result.state
    info = result.info
    if step % 100 == 0:
        print(f"step {step:4d}  v={info['v']:5.2f} m/s  "
              f"e_y={info['e_y']:+.3f} m  e_phi={info['e_phi_deg']:+7.2f} deg")
    if result.done:
        print(f"episode over after {info['steps']} steps: "
              f"goal={info['goal']} off_track={info['off_track']} "
              f"timeout={info['timeout']}")
        break

# a second episode with a different seed lands on a different jittered start
state = env.reset(seed=8)
print("restart e_y:", round(float(state[2]), 4))
