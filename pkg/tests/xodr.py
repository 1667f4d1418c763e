"""Builders for small hand-written OpenDRIVE documents used by the tests."""


def lane(lid, width=3.5, succ=None, pred=None, kind="driving", b=0.0, c=0.0, d=0.0):
    link = ""
    if succ is not None or pred is not None:
        inner = ""
        if pred is not None:
            inner += f'<predecessor id="{pred}"/>'
        if succ is not None:
            inner += f'<successor id="{succ}"/>'
        link = f"<link>{inner}</link>"
    return (f'<lane id="{lid}" type="{kind}">{link}'
            f'<width sOffset="0" a="{width}" b="{b}" c="{c}" d="{d}"/></lane>')


def road(rid, length, geometry, left=(), right=(), succ=None, pred=None, signals="", speed=None):
    link = ""
    if succ or pred:
        inner = ""
        if pred:
            inner += f'<predecessor elementType="road" elementId="{pred[0]}" contactPoint="{pred[1]}"/>'
        if succ:
            inner += f'<successor elementType="road" elementId="{succ[0]}" contactPoint="{succ[1]}"/>'
        link = f"<link>{inner}</link>"
    typ = f'<type s="0" type="town"><speed max="{speed}" unit="m/s"/></type>' if speed else ""
    lanes = "<laneSection s=\"0\">"
    if left:
        lanes += "<left>" + "".join(left) + "</left>"
    lanes += '<center><lane id="0" type="none"/></center>'
    if right:
        lanes += "<right>" + "".join(right) + "</right>"
    lanes += "</laneSection>"
    return (f'<road id="{rid}" length="{length}" junction="-1">{link}{typ}'
            f"<planView>{geometry}</planView><lanes>{lanes}</lanes>{signals}</road>")


def line(x, y, hdg, length, s=0.0):
    return f'<geometry s="{s}" x="{x}" y="{y}" hdg="{hdg}" length="{length}"><line/></geometry>'


def arc(x, y, hdg, length, curvature, s=0.0):
    return (f'<geometry s="{s}" x="{x}" y="{y}" hdg="{hdg}" length="{length}">'
            f'<arc curvature="{curvature}"/></geometry>')


def document(*roads):
    return ('<?xml version="1.0"?>\n<OpenDRIVE>\n<header revMajor="1" revMinor="6"/>\n'
            + "\n".join(roads) + "\n</OpenDRIVE>\n")


def two_road_doc():
    """Road 1 (100 m) continues into road 2 (50 m); two same-direction lanes; road 9 is isolated."""
    r1 = road(1, 100, line(0, 0, 0, 100), right=[lane(-1, succ=-1), lane(-2, succ=-2)],
              succ=(2, "start"))
    r2 = road(2, 50, line(100, 0, 0, 50), right=[lane(-1, pred=-1), lane(-2, pred=-2)],
              pred=(1, "end"))
    r9 = road(9, 30, line(0, 50, 0, 30), right=[lane(-1)])
    return document(r1, r2, r9)
