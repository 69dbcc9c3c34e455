export { ApiClient, ApiError, RejectedError, StaleRevisionError } from "./api.js";
export {
  buildCard,
  buildCards,
  disableCard,
  policySortKey,
  sortCards,
  type CandidateCard,
  type GroupDelta,
} from "./cards.js";
export {
  escapeHtml,
  renderBanner,
  renderCandidateCard,
  renderCandidateList,
  renderFormulaList,
  renderMetricPanel,
  renderRefreshPrompt,
  renderStaleBadge,
} from "./panel.js";
export {
  actionLabel,
  buildTraceGraph,
  renderTraceGraph,
  type TraceEdge,
  type TraceGraph,
  type TraceNode,
} from "./trace.js";
export { Workbench, type WorkbenchOptions, type WorkbenchState } from "./workbench.js";
export type * from "./types.js";
