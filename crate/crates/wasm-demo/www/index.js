import init, { Demo } from "./pkg/cfaudit_wasm.js";

const COLORS = ["#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6d3d9c"];
const $ = (id) => document.getElementById(id);
let demo = null;

function drawCurves() {
  const curves = JSON.parse(demo.availability_curves());
  const cv = $("curves"), g = cv.getContext("2d");
  const pad = 36, w = cv.width - 2 * pad, h = cv.height - 2 * pad;
  g.clearRect(0, 0, cv.width, cv.height);
  g.strokeStyle = "#999";
  g.strokeRect(pad, pad, w, h);
  g.fillStyle = "#444";
  g.fillText("100%", 2, pad + 4);
  g.fillText("0%", 12, pad + h);
  const steps = curves[0].percentages.length;
  g.fillText("N = 1", pad, pad + h + 16);
  g.fillText(`N = ${steps}`, pad + w - 30, pad + h + 16);
  $("legend").innerHTML = "";
  curves.forEach((c, k) => {
    g.strokeStyle = COLORS[k % COLORS.length];
    g.beginPath();
    c.percentages.forEach((p, i) => {
      const x = pad + (w * i) / (steps - 1), y = pad + h - (h * p) / 100;
      i ? g.lineTo(x, y) : g.moveTo(x, y);
    });
    g.stroke();
    const s = document.createElement("span");
    s.style.color = g.strokeStyle;
    s.textContent = `d = ${c.d} (test RMSE ${c.test_rmse.toFixed(4)})`;
    $("legend").appendChild(s);
  });
}

function drawHeatmap() {
  const n = +$("heat-n").value;
  $("heat-n-out").textContent = n;
  const hm = JSON.parse(demo.discrepancy_heatmap(n));
  const cv = $("heatmap"), g = cv.getContext("2d");
  const k = hm.labels.length, pad = 60, cell = (cv.width - pad) / k;
  const max = Math.max(1, ...hm.cells.flat());
  g.clearRect(0, 0, cv.width, cv.height);
  g.font = "11px sans-serif";
  for (let r = 0; r < k; r++) {
    g.fillStyle = "#222";
    g.fillText(hm.labels[r], 2, pad + r * cell + cell / 2);
    g.save();
    g.translate(pad + r * cell + cell / 2, pad - 4);
    g.rotate(-Math.PI / 4);
    g.fillText(hm.labels[r], 0, 0);
    g.restore();
    for (let c = 0; c < k; c++) {
      const v = hm.cells[r][c], t = v / max;
      g.fillStyle = `rgb(${255 - 80 * t}, ${255 - 200 * t}, ${255 - 200 * t})`;
      g.fillRect(pad + c * cell, pad + r * cell, cell - 1, cell - 1);
      g.fillStyle = v === hm.final_discrepancy[r] && v > 0 ? "#a00" : "#222";
      g.fillText(String(v), pad + c * cell + cell / 2 - 6, pad + r * cell + cell / 2 + 4);
    }
  }
  $("heat-info").textContent =
    `ambiguity ${hm.ambiguity.toFixed(2)}% of items; row maxima in red`;
}

function drawGeometry() {
  const n = +$("geo-n").value;
  $("geo-n-out").textContent = n;
  const pts = JSON.parse(demo.item_geometry(n));
  const cv = $("geometry"), g = cv.getContext("2d");
  const r = Math.max(1e-9, ...pts.map((p) => Math.max(Math.abs(p.x), Math.abs(p.y))));
  const half = cv.width / 2, scale = (half - 12) / r;
  g.clearRect(0, 0, cv.width, cv.height);
  g.strokeStyle = "#ddd";
  g.beginPath();
  g.moveTo(half, 0); g.lineTo(half, cv.height);
  g.moveTo(0, half); g.lineTo(cv.width, half);
  g.stroke();
  for (const p of pts) {
    g.beginPath();
    g.arc(half + p.x * scale, half - p.y * scale, 4, 0, 2 * Math.PI);
    g.strokeStyle = "#1b6ca8";
    g.fillStyle = "#1b6ca8";
    p.reachable ? g.fill() : g.stroke();
  }
}

function train(ev) {
  if (ev) ev.preventDefault();
  $("status").textContent = "training…";
  setTimeout(() => {
    try {
      demo = new Demo(+$("users").value, +$("items").value, +$("lambda").value, +$("seed").value);
      drawCurves();
      drawHeatmap();
      drawGeometry();
      $("status").textContent = "ready";
    } catch (e) {
      $("status").textContent = `error: ${e.message ?? e}`;
    }
  }, 10);
}

await init();
$("setup").addEventListener("submit", train);
$("heat-n").addEventListener("input", () => demo && drawHeatmap());
$("geo-n").addEventListener("input", () => demo && drawGeometry());
train();
